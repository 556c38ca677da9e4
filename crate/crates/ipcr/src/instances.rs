//! Random protocol instances and the protocol-versus-oracle check used by
//! `selftest` and the test suites.

use std::collections::BTreeMap;

use ipcr_core::model::CandidateSet;
use ipcr_core::oracle::OracleResult;
use ipcr_core::server::SharedKey;
use ipcr_core::{
    brute_force, run_retrieval, ActionabilityWeights, Database, FeatureVector, ImmutableSet, ProtocolConfig,
    RetrievalRequest, Scheme, SimCluster,
};
use rand::seq::index::sample;
use rand::{Rng, RngCore};

#[derive(Clone, Debug)]
pub struct Instance {
    pub scheme: Scheme,
    pub db: Database,
    pub x: FeatureVector,
    pub immutable: ImmutableSet,
    pub weights: Option<ActionabilityWeights>,
}

impl Instance {
    pub fn l1(&self) -> u32 {
        self.weights.as_ref().map_or(1, |w| w.l1())
    }

    pub fn config(&self) -> ProtocolConfig {
        ProtocolConfig::canonical(self.scheme, self.db.dim(), self.db.len(), self.db.range(), self.l1())
            .expect("canonical parameters are valid")
    }
}

pub fn random_point<R: Rng + ?Sized>(rng: &mut R, d: usize, r: u32) -> FeatureVector {
    FeatureVector::new((0..d).map(|_| rng.random_range(0..=r)).collect(), r).unwrap()
}

/// `d in [1,5]`, `R in [1,4]`, `M in [1,20]`, any `|I|`; actionable schemes
/// get weights up to `L1 <= 4` on a random subset of mutable features.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, scheme: Scheme) -> Instance {
    let d = rng.random_range(1..=5);
    let r = rng.random_range(1..=4);
    let m = rng.random_range(1..=20);
    let rows: Vec<FeatureVector> = (0..m).map(|_| random_point(rng, d, r)).collect();
    let size = rng.random_range(0..=d);
    let immutable = ImmutableSet::new(sample(rng, d, size).into_iter().map(|k| k + 1).collect(), d).unwrap();
    let mut x = random_point(rng, d, r);
    // bias towards non-empty candidate sets and exact ties
    match rng.random_range(0..4) {
        0 | 1 => {
            let donor = &rows[rng.random_range(0..m)];
            let coords = (1..=d).map(|k| if immutable.contains(k) { donor.at(k) } else { x.at(k) }).collect();
            x = FeatureVector::new(coords, r).unwrap();
        }
        2 => x = rows[rng.random_range(0..m)].clone(),
        _ => {}
    }
    let weights = scheme.is_actionable().then(|| {
        let l1 = rng.random_range(1..=4);
        let mut explicit = BTreeMap::new();
        for k in immutable.mutable() {
            if rng.random_bool(0.7) {
                explicit.insert(k, rng.random_range(1..=l1));
            }
        }
        ActionabilityWeights::new(explicit, l1).unwrap()
    });
    Instance { scheme, db: Database::new(d, r, rows).unwrap(), x, immutable, weights }
}

pub fn oracle(inst: &Instance) -> OracleResult {
    brute_force(&inst.x, &inst.immutable, &inst.db, inst.weights.as_ref()).unwrap()
}

fn members(c: &CandidateSet) -> Vec<usize> {
    c.members().collect()
}

/// Runs the protocol twice (distance round forced, and the default skip
/// policy) and compares each run with the oracle.
pub fn check_instance<R: RngCore + ?Sized>(inst: &Instance, rng: &mut R, key: SharedKey) -> Result<(), String> {
    let want = oracle(inst);
    for always in [true, false] {
        let mut cluster = SimCluster::deploy(&inst.config(), &inst.db, key).map_err(|e| e.to_string())?;
        let mut req = RetrievalRequest::new(inst.x.clone(), inst.immutable.clone(), inst.scheme);
        req.weights = inst.weights.clone();
        req.always_run_phase2 = always;
        let got = run_retrieval(&mut cluster, &req, rng).map_err(|e| format!("{}: {e}", inst.scheme))?.result;
        let skipped = inst.scheme.is_two_phase() && !always && want.candidate_set.len() == 1;
        let want_distance = if skipped { None } else { want.distance };
        if members(&got.candidate_set) != members(&want.candidate_set)
            || got.theta_star != want.theta_star
            || got.distance != want_distance
        {
            return Err(format!(
                "{} (always_run_phase2 = {always}): protocol gave Theta={:?} theta*={:?} dist={:?}, oracle Theta={:?} theta*={:?} dist={:?}",
                inst.scheme,
                members(&got.candidate_set),
                got.theta_star,
                got.distance,
                members(&want.candidate_set),
                want.theta_star,
                want_distance
            ));
        }
    }
    Ok(())
}
