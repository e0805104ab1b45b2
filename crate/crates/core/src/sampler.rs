//! Proportional allocation and stratified simple random sampling without
//! replacement.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::census::Census;
use crate::rng::{stream_rng, Domain};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("sample size {requested} infeasible: need between {min} (one per stratum) and {max} (all casillas)")]
    InfeasibleAllocation { requested: usize, min: usize, max: usize },
    #[error("unknown casilla_id `{0}`")]
    UnknownCasillaId(String),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
}

/// Per-stratum sample sizes, aligned with `Census::strata()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    target_total: usize,
    stratum_ids: Vec<String>,
    sizes: Vec<usize>,
}

impl Serialize for Allocation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            target_total: usize,
            realized_total: usize,
            per_stratum: BTreeMap<&'a str, usize>,
        }
        Repr {
            target_total: self.target_total,
            realized_total: self.realized_total(),
            per_stratum: self.stratum_ids.iter().map(String::as_str).zip(self.sizes.iter().copied()).collect(),
        }
        .serialize(s)
    }
}

impl Allocation {
    /// Explicit sizes in census stratum order; each must lie in `[1, K_i]`.
    pub fn from_sizes(census: &Census, sizes: Vec<usize>) -> Result<Self, SamplerError> {
        let strata = census.strata();
        if sizes.len() != strata.len() {
            return Err(SamplerError::InvalidAllocation(format!(
                "{} sizes for {} strata",
                sizes.len(),
                strata.len()
            )));
        }
        for (s, &c) in strata.iter().zip(&sizes) {
            if c == 0 || c > s.size() {
                return Err(SamplerError::InvalidAllocation(format!(
                    "stratum `{}`: size {c} outside [1, {}]",
                    s.id,
                    s.size()
                )));
            }
        }
        Ok(Allocation {
            target_total: sizes.iter().sum(),
            stratum_ids: strata.iter().map(|s| s.id.clone()).collect(),
            sizes,
        })
    }

    /// Every casilla in the sample.
    pub fn full(census: &Census) -> Self {
        Allocation::from_sizes(census, census.strata().iter().map(|s| s.size()).collect())
            .expect("strata are nonempty")
    }

    pub fn target_total(&self) -> usize {
        self.target_total
    }

    pub fn realized_total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn get(&self, stratum_id: &str) -> Option<usize> {
        self.stratum_ids.iter().position(|s| s == stratum_id).map(|i| self.sizes[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.stratum_ids.iter().map(String::as_str).zip(self.sizes.iter().copied())
    }
}

/// Allocates `c` casillas proportionally to each stratum's lista nominal.
///
/// `c_i` starts at the nearest integer to `(n_i/n)·c` (halves round up),
/// clamped to `[1, K_i]`. While the total is short, the stratum with the
/// largest residual `(n_i/n)·c - c_i` gains one; while it is over, the one
/// with the smallest residual loses one. Ties favour the earlier stratum id
/// (it gains first and loses last). When the census has no lista nominal
/// data the casilla counts `K_i` are used as sizes instead.
pub fn proportional_allocation(census: &Census, c: usize) -> Result<Allocation, SamplerError> {
    let strata = census.strata();
    let (min, max) = (strata.len(), census.num_casillas());
    if c < min || c > max {
        return Err(SamplerError::InfeasibleAllocation { requested: c, min, max });
    }
    let weights: Vec<i128> = if census.lista_total() > 0 {
        strata.iter().map(|s| i128::from(s.lista_total)).collect()
    } else {
        strata.iter().map(|s| s.size() as i128).collect()
    };
    let total: i128 = weights.iter().sum();
    let c128 = c as i128;

    let mut sizes: Vec<usize> = strata
        .iter()
        .zip(&weights)
        .map(|(s, &w)| {
            let nearest = (2 * w * c128 + total) / (2 * total);
            (nearest as usize).clamp(1, s.size())
        })
        .collect();
    // Residuals scaled by `total` so they stay integral.
    let residual = |i: usize, sizes: &[usize]| weights[i] * c128 - sizes[i] as i128 * total;

    let mut sum: usize = sizes.iter().sum();
    while sum < c {
        let i = (0..sizes.len())
            .filter(|&i| sizes[i] < strata[i].size())
            .max_by(|&a, &b| residual(a, &sizes).cmp(&residual(b, &sizes)).then(b.cmp(&a)))
            .expect("c <= K leaves room");
        sizes[i] += 1;
        sum += 1;
    }
    while sum > c {
        let i = (0..sizes.len())
            .filter(|&i| sizes[i] > 1)
            .min_by(|&a, &b| residual(a, &sizes).cmp(&residual(b, &sizes)).then(b.cmp(&a)))
            .expect("c >= #strata leaves room");
        sizes[i] -= 1;
        sum -= 1;
    }
    Ok(Allocation { target_total: c, stratum_ids: strata.iter().map(|s| s.id.clone()).collect(), sizes })
}

/// `c_i / K_i` for the casilla's stratum.
pub fn inclusion_probability(
    allocation: &Allocation,
    census: &Census,
    casilla_id: &str,
) -> Result<f64, SamplerError> {
    let (s, _) = census
        .locate(casilla_id)
        .ok_or_else(|| SamplerError::UnknownCasillaId(casilla_id.to_string()))?;
    Ok(allocation.sizes[s] as f64 / census.strata()[s].size() as f64)
}

/// Reusable scratch space for repeated stratified draws.
///
/// Each stratum keeps an index permutation that starts in file order. A draw
/// runs a partial Fisher–Yates shuffle on every stratum (in stratum order,
/// from one generator) and the selected casillas are the first `c_i`
/// entries. The swaps are undone before the next draw, so every draw starts
/// from file order and costs `O(c)` rather than `O(K)`.
#[derive(Debug, Clone)]
pub struct DrawBuffers {
    perms: Vec<Vec<u32>>,
    sizes: Vec<usize>,
    log: Vec<(u32, u32, u32)>,
}

impl DrawBuffers {
    pub fn new(census: &Census) -> Self {
        DrawBuffers {
            perms: census.strata().iter().map(|s| (0..s.size() as u32).collect()).collect(),
            sizes: vec![0; census.strata().len()],
            log: Vec::new(),
        }
    }

    fn restore(&mut self) {
        for &(s, a, b) in self.log.iter().rev() {
            self.perms[s as usize].swap(a as usize, b as usize);
        }
        self.log.clear();
    }

    pub fn draw_with(&mut self, allocation: &Allocation, rng: &mut ChaCha8Rng) {
        self.restore();
        for (s, (perm, &c)) in self.perms.iter_mut().zip(&allocation.sizes).enumerate() {
            let k = perm.len();
            for t in 0..c {
                let j = rng.random_range(t..k);
                perm.swap(t, j);
                self.log.push((s as u32, t as u32, j as u32));
            }
        }
        self.sizes.copy_from_slice(&allocation.sizes);
    }

    /// Draw number `draw_index` under `seed`.
    pub fn draw(&mut self, allocation: &Allocation, seed: u64, draw_index: u64) {
        let mut rng = stream_rng(seed, Domain::Draw, draw_index);
        self.draw_with(allocation, &mut rng);
    }

    /// Positions (within the stratum) selected by the last draw.
    pub fn selected(&self, stratum: usize) -> &[u32] {
        &self.perms[stratum][..self.sizes[stratum]]
    }

    pub fn num_strata(&self) -> usize {
        self.perms.len()
    }
}

/// One concrete stratified sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleDraw {
    pub allocation: Allocation,
    pub selected: BTreeMap<String, Vec<String>>,
    pub seed: u64,
    pub draw_index: u64,
}

impl SampleDraw {
    pub fn casilla_ids(&self) -> impl Iterator<Item = &str> {
        self.selected.values().flatten().map(String::as_str)
    }
}

pub fn draw(census: &Census, allocation: &Allocation, seed: u64, draw_index: u64) -> SampleDraw {
    let mut buffers = DrawBuffers::new(census);
    buffers.draw(allocation, seed, draw_index);
    let selected = census
        .strata()
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let ids = buffers
                .selected(s)
                .iter()
                .map(|&k| st.casillas[k as usize].casilla_id.clone())
                .collect();
            (st.id.clone(), ids)
        })
        .collect();
    SampleDraw { allocation: allocation.clone(), selected, seed, draw_index }
}
