use alloc::vec::Vec;

use crate::field::{
    choose_field, field_bound, next_prime_above, Fe, FieldBoundParams, FieldError, PrimeModulus,
    VandermondeSystem,
};
use crate::model::Scheme;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("field size q = {q} does not exceed the {scheme} bound {bound}")]
    FieldTooSmall { scheme: Scheme, q: u64, bound: u64 },
    #[error("scaling factor L = {l} must exceed {min_exclusive}")]
    ScalingTooSmall { l: u64, min_exclusive: u64 },
    #[error("{scheme} needs {needed} servers, {got} configured")]
    ServerCount { scheme: Scheme, needed: usize, got: usize },
    #[error("dimension d must be positive")]
    ZeroDimension,
    #[error("feature range R must be positive")]
    ZeroRange,
}

/// Everything the client and the servers agree on before a session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub scheme: Scheme,
    pub q: PrimeModulus,
    /// One public evaluation point per server, `alphas[n - 1]` for server `n`.
    pub alphas: Vec<Fe>,
    pub d: usize,
    pub m: usize,
    pub r: u32,
    /// Upper bound on `|I|` (single-phase schemes).
    pub f: usize,
    /// Immutable scaling factor (single-phase schemes).
    pub l: u64,
    /// Maximum actionability weight; 1 for the plain schemes.
    pub l1: u32,
    /// Run the distance phase even when `|Theta| <= 1`.
    pub always_run_phase2: bool,
}

impl ProtocolConfig {
    /// Canonical deployment: `F = d`, the smallest valid `L`, the smallest
    /// prime above the field bound that still fits `N` distinct nonzero
    /// evaluation points, and `alpha_n = n`.
    pub fn canonical(scheme: Scheme, d: usize, m: usize, r: u32, l1: u32) -> Result<Self, ConfigError> {
        Self::with_bounds(scheme, d, m, r, d, None, l1)
    }

    pub fn with_bounds(
        scheme: Scheme,
        d: usize,
        m: usize,
        r: u32,
        f: usize,
        l: Option<u64>,
        l1: u32,
    ) -> Result<Self, ConfigError> {
        if d == 0 {
            return Err(ConfigError::ZeroDimension);
        }
        if r == 0 {
            return Err(ConfigError::ZeroRange);
        }
        let l1 = if scheme.is_actionable() { l1.max(1) } else { 1 };
        let l = l.unwrap_or_else(|| default_scaling(r, d, l1));
        let n = scheme.servers_required();
        let bound = field_bound(scheme, &bound_params(d, r, f, l, l1))?;
        let q = PrimeModulus::new(next_prime_above(bound.max(n as u64))?)?;
        let alphas = (1..=n as u64).map(|a| q.elem(a)).collect();
        let cfg = ProtocolConfig { scheme, q, alphas, d, m, r, f, l, l1, always_run_phase2: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_servers(&self) -> usize {
        self.alphas.len()
    }

    /// Servers `1..=3` answer the membership phase and the single-phase
    /// query; the actionable distance phase uses all four.
    pub fn membership_system(&self) -> Result<VandermondeSystem, FieldError> {
        VandermondeSystem::new(&self.alphas[..3])
    }

    pub fn distance_system(&self) -> Result<VandermondeSystem, FieldError> {
        let n = if self.scheme == Scheme::TwoPhaseActionable { 4 } else { 3 };
        VandermondeSystem::new(&self.alphas[..n])
    }

    pub fn field_bound(&self) -> Result<u64, FieldError> {
        field_bound(self.scheme, &bound_params(self.d, self.r, self.f, self.l, self.l1))
    }

    /// Largest revealed value of a candidate row in the single-phase schemes.
    pub fn max_match_value(&self, immutable_count: usize) -> u64 {
        let r2 = (self.r as u64).pow(2);
        self.l1 as u64 * r2 * (self.d - immutable_count.min(self.d)) as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d == 0 {
            return Err(ConfigError::ZeroDimension);
        }
        if self.r == 0 {
            return Err(ConfigError::ZeroRange);
        }
        let needed = self.scheme.servers_required();
        if self.alphas.len() != needed {
            return Err(ConfigError::ServerCount { scheme: self.scheme, needed, got: self.alphas.len() });
        }
        for a in &self.alphas {
            if a.modulus() != self.q {
                return Err(FieldError::ModulusMismatch(self.q.get(), a.modulus().get()).into());
            }
        }
        VandermondeSystem::new(&self.alphas)?;
        if !self.scheme.is_two_phase() {
            let min = self.l1 as u64 * (self.r as u64).pow(2) * self.d as u64;
            if self.l <= min {
                return Err(ConfigError::ScalingTooSmall { l: self.l, min_exclusive: min });
            }
        }
        let bound = self.field_bound()?;
        if self.q.get() <= bound {
            return Err(ConfigError::FieldTooSmall { scheme: self.scheme, q: self.q.get(), bound });
        }
        Ok(())
    }
}

/// `L = L1 R^2 d + 1`, the smallest scaling factor keeping the match and
/// mismatch ranges disjoint.
pub fn default_scaling(r: u32, d: usize, l1: u32) -> u64 {
    l1 as u64 * (r as u64).pow(2) * d as u64 + 1
}

fn bound_params(d: usize, r: u32, f: usize, l: u64, l1: u32) -> FieldBoundParams {
    FieldBoundParams { r: r as u64, d: d as u64, f: Some(f as u64), l: Some(l), l1: Some(l1 as u64) }
}

/// The canonical field for a scheme without the server-count adjustment.
pub fn canonical_field(scheme: Scheme, d: usize, r: u32, f: usize, l1: u32) -> Result<PrimeModulus, FieldError> {
    let l1 = if scheme.is_actionable() { l1.max(1) } else { 1 };
    choose_field(scheme, &bound_params(d, r, f, default_scaling(r, d, l1), l1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_single_phase_matches_reference_setup() {
        let cfg = ProtocolConfig::canonical(Scheme::SinglePhase, 3, 3, 3, 1).unwrap();
        assert_eq!(cfg.l, 28);
        assert_eq!(cfg.q.get(), 757);
        assert_eq!(cfg.alphas.iter().map(|a| a.value()).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn canonical_two_phase_fields() {
        assert_eq!(ProtocolConfig::canonical(Scheme::TwoPhase, 3, 3, 3, 1).unwrap().q.get(), 29);
        // bound R^2 d = 1 would give q = 2, too small for three distinct points
        let tiny = ProtocolConfig::canonical(Scheme::TwoPhase, 1, 1, 1, 1).unwrap();
        assert_eq!(tiny.q.get(), 5);
        let act = ProtocolConfig::canonical(Scheme::TwoPhaseActionable, 1, 1, 1, 1).unwrap();
        assert_eq!(act.q.get(), 5);
        assert_eq!(act.n_servers(), 4);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ProtocolConfig::canonical(Scheme::SinglePhase, 3, 3, 3, 1).unwrap();
        cfg.l = 27;
        assert!(matches!(cfg.validate(), Err(ConfigError::ScalingTooSmall { .. })));
        let mut cfg = ProtocolConfig::canonical(Scheme::TwoPhase, 3, 3, 3, 1).unwrap();
        cfg.q = PrimeModulus::new(23).unwrap();
        cfg.alphas = (1..=3).map(|a| cfg.q.elem(a)).collect();
        assert!(matches!(cfg.validate(), Err(ConfigError::FieldTooSmall { bound: 27, .. })));
        let mut cfg = ProtocolConfig::canonical(Scheme::TwoPhase, 3, 3, 3, 1).unwrap();
        cfg.alphas.pop();
        assert!(matches!(cfg.validate(), Err(ConfigError::ServerCount { .. })));
        let mut cfg = ProtocolConfig::canonical(Scheme::TwoPhase, 3, 3, 3, 1).unwrap();
        cfg.alphas[2] = cfg.q.elem(1);
        assert!(matches!(cfg.validate(), Err(ConfigError::Field(FieldError::RepeatedAlpha))));
        cfg.alphas[2] = cfg.q.zero();
        assert!(matches!(cfg.validate(), Err(ConfigError::Field(FieldError::ZeroAlpha))));
    }

    #[test]
    fn actionable_single_phase_scaling() {
        let cfg = ProtocolConfig::canonical(Scheme::SinglePhaseActionable, 2, 2, 1, 3).unwrap();
        // L > L1 R^2 d = 6
        assert_eq!(cfg.l, 7);
        // q > F (L - 1) R^2 + L1 R^2 d = 2 * 6 + 6 = 18
        assert_eq!(cfg.q.get(), 19);
        assert_eq!(cfg.max_match_value(1), 3);
    }
}
