use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CasillaRecord, Census, CensusError, Contender};

/// Parameters for a synthetic election used in tests and demos.
///
/// `share_profile` gives the expected overall vote shares (one per
/// contender; empty means uniform). `dispersion` is the standard deviation
/// of the log-normal stratum and casilla effects on those shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_strata: usize,
    pub casillas_per_stratum: usize,
    pub contenders: usize,
    #[serde(default)]
    pub share_profile: Vec<f64>,
    #[serde(default = "default_dispersion")]
    pub dispersion: f64,
    pub seed: u64,
}

fn default_dispersion() -> f64 {
    0.2
}

impl SynthSpec {
    pub fn new(n_strata: usize, casillas_per_stratum: usize, share_profile: Vec<f64>, seed: u64) -> Self {
        SynthSpec {
            n_strata,
            casillas_per_stratum,
            contenders: share_profile.len(),
            share_profile,
            dispersion: default_dispersion(),
            seed,
        }
    }

    fn profile(&self) -> Result<Vec<f64>, CensusError> {
        let bad = |m: String| Err(CensusError::InvalidSpec(m));
        if self.n_strata == 0 || self.casillas_per_stratum == 0 {
            return bad("strata and casillas per stratum must be positive".into());
        }
        if self.contenders < 2 {
            return bad(format!("need at least 2 contenders, got {}", self.contenders));
        }
        if !(self.dispersion.is_finite() && self.dispersion >= 0.0) {
            return bad(format!("dispersion {} must be finite and non-negative", self.dispersion));
        }
        if self.share_profile.is_empty() {
            return Ok(vec![1.0 / self.contenders as f64; self.contenders]);
        }
        if self.share_profile.len() != self.contenders {
            return bad(format!(
                "share profile has {} entries for {} contenders",
                self.share_profile.len(),
                self.contenders
            ));
        }
        if self.share_profile.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return bad("share profile entries must be positive".into());
        }
        let total: f64 = self.share_profile.iter().sum();
        Ok(self.share_profile.iter().map(|p| p / total).collect())
    }
}

fn jitter(base: &[f64], sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = base
        .iter()
        .map(|p| {
            let z: f64 = rng.sample(StandardNormal);
            p * (sd * z).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Deterministic for a fixed spec (including seed).
pub fn synth_election(spec: &SynthSpec) -> Result<Census, CensusError> {
    let profile = spec.profile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_strata.to_string().len().max(2);
    let contenders: Vec<Contender> = (1..=spec.contenders)
        .map(|j| Contender::new(format!("C{j}"), format!("Contender {j}"), super::ContenderKind::Candidate))
        .collect();

    let mut records = Vec::with_capacity(spec.n_strata * spec.casillas_per_stratum);
    for s in 1..=spec.n_strata {
        let stratum_id = format!("S{s:0width$}");
        let stratum_shares = jitter(&profile, spec.dispersion, &mut rng);
        for k in 1..=spec.casillas_per_stratum {
            let lista_nominal: u64 = rng.random_range(300..=750);
            let turnout: f64 = rng.random_range(0.45..0.70);
            let voters = Binomial::new(lista_nominal, turnout).expect("valid binomial").sample(&mut rng);
            let shares = jitter(&stratum_shares, spec.dispersion / 2.0, &mut rng);
            // Multinomial as a chain of conditional binomials.
            let mut remaining = voters;
            let mut mass_left = 1.0;
            let mut votes = Vec::with_capacity(shares.len());
            for (j, p) in shares.iter().enumerate() {
                let v = if j + 1 == shares.len() || remaining == 0 {
                    remaining
                } else {
                    let prob = (p / mass_left).clamp(0.0, 1.0);
                    Binomial::new(remaining, prob).expect("valid binomial").sample(&mut rng)
                };
                votes.push(v);
                remaining -= v;
                mass_left -= p;
            }
            records.push(CasillaRecord {
                casilla_id: format!("{stratum_id}-{k:04}"),
                stratum_id: stratum_id.clone(),
                lista_nominal,
                votes,
            });
        }
    }
    Census::from_records(contenders, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_census() {
        let spec = SynthSpec::new(5, 20, vec![0.6, 0.3, 0.1], 1);
        let a = synth_election(&spec).unwrap();
        let b = synth_election(&spec).unwrap();
        assert_eq!(a, b);
        let c = synth_election(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn even_race_shares() {
        let census = synth_election(&SynthSpec::new(45, 400, vec![0.5, 0.5], 1)).unwrap();
        assert_eq!(census.num_casillas(), 18_000);
        for share in census.true_shares() {
            assert!(share > 0.48 && share < 0.52, "{share}");
        }
        assert!(census.validate().errors.is_empty());
    }

    #[test]
    fn uneven_profile_within_two_points() {
        let profile = vec![0.34, 0.31, 0.18, 0.11, 0.03, 0.02, 0.01];
        let census = synth_election(&SynthSpec::new(45, 100, profile.clone(), 9)).unwrap();
        for (got, want) in census.true_shares().iter().zip(&profile) {
            assert!((got - want).abs() < 0.02, "{got} vs {want}");
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            synth_election(&SynthSpec::new(3, 3, vec![1.0], 1)),
            Err(CensusError::InvalidSpec(_))
        ));
        assert!(synth_election(&SynthSpec::new(0, 3, vec![0.5, 0.5], 1)).is_err());
        assert!(synth_election(&SynthSpec::new(3, 3, vec![0.5, -0.5], 1)).is_err());
        let mut s = SynthSpec::new(3, 3, vec![], 1);
        s.contenders = 4;
        assert_eq!(synth_election(&s).unwrap().num_contenders(), 4);
    }
}
