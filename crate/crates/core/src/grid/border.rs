use serde::{Deserialize, Serialize};

/// How samples outside the image lattice are synthesised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Mirror about the edge pixel without repeating it (`-1 -> 1`).
    #[default]
    Reflect,
    /// Repeat the edge pixel (`-1 -> 0`).
    Replicate,
}

impl BoundaryPolicy {
    /// Maps an arbitrary index onto `0..len`.
    #[inline]
    pub fn resolve(self, i: isize, len: usize) -> usize {
        debug_assert!(len > 0);
        let n = len as isize;
        if (0..n).contains(&i) {
            return i as usize;
        }
        match self {
            BoundaryPolicy::Replicate => i.clamp(0, n - 1) as usize,
            BoundaryPolicy::Reflect => {
                if n == 1 {
                    return 0;
                }
                let period = 2 * (n - 1);
                let r = i.rem_euclid(period);
                (if r < n { r } else { period - r }) as usize
            }
        }
    }
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reflect" => Ok(BoundaryPolicy::Reflect),
            "replicate" => Ok(BoundaryPolicy::Replicate),
            other => Err(format!("unknown boundary policy '{other}'")),
        }
    }
}
