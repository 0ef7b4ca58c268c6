//! Empirical constants measured once (master seed 7) and asserted afterwards
//! with a factor-two margin.

/// Margin applied to every calibrated value.
pub const HEADROOM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pinned {
    pub name: &'static str,
    pub calibrated: f64,
}

impl Pinned {
    pub fn limit(&self) -> f64 {
        HEADROOM * self.calibrated
    }

    pub fn holds(&self, measured: f64) -> bool {
        measured <= self.limit()
    }
}

/// `sup ||[b,S^{ij}]f|| / ((1 + max(i,j)) ||b||_BMO ||f||)`, d=1, N=6, i,j <= 4, 100 trials.
pub const COMMUTATOR_RATIO: Pinned = Pinned { name: "commutator_ratio", calibrated: 0.5996 };

/// John-Nirenberg ratios for p in {1.25, 1.5, 2, 3}, d=1, N=6, 200 symbols.
pub const JN: [(f64, Pinned); 4] = [
    (1.25, Pinned { name: "jn_p1.25", calibrated: 1.0 }),
    (1.5, Pinned { name: "jn_p1.5", calibrated: 1.0 }),
    (2.0, Pinned { name: "jn_p2", calibrated: 1.0 }),
    (3.0, Pinned { name: "jn_p3", calibrated: 1.0 }),
];

/// Fefferman-Stein ratios, families of four bumps, d=1, N=6, 200 trials.
pub const FS: [(f64, Pinned); 3] = [
    (1.25, Pinned { name: "fs_p1.25", calibrated: 1.8832 }),
    (1.5, Pinned { name: "fs_p1.5", calibrated: 1.5200 }),
    (2.0, Pinned { name: "fs_p2", calibrated: 1.2192 }),
];

/// `||P(b,a,f)|| / (||b|| ||a|| ||f||)`, d=1, N=6, 50 trials.
pub const P_RATIO: Pinned = Pinned { name: "P", calibrated: 0.1440 };
/// Bi-parameter ratios at N1=N2=3, 50 trials, maximum over (k,l) <= (2,2).
pub const PP_RATIO: Pinned = Pinned { name: "PP", calibrated: 0.0900 };
pub const PP1_RATIO: Pinned = Pinned { name: "PP1", calibrated: 0.0863 };
pub const BPK_RATIO: Pinned = Pinned { name: "BPk", calibrated: 0.2126 };
pub const PBL_RATIO: Pinned = Pinned { name: "PBl", calibrated: 0.1652 };
