use ipcr_core::leakage::*;
use ipcr_core::Scheme;

fn grid(scheme: Scheme, policy: Phase2Policy, sampling: SamplingModel) -> Vec<f64> {
    (0..=3)
        .map(|s| {
            let m = LeakageModel::new(scheme, 3, 3, 3, s, 757.0).with_policy(policy).with_sampling(sampling);
            leakage(&m).unwrap()
        })
        .collect()
}

#[test]
fn reference_instance_values() {
    let single = grid(Scheme::SinglePhase, Phase2Policy::Always, SamplingModel::IidExcludingX);
    for (got, want) in single.iter().zip([1.1432, 1.4492, 1.4492, 1.1432]) {
        assert!((got - want).abs() < 0.005, "{single:?}");
    }
    assert_eq!(single[0].to_bits(), single[3].to_bits());
    assert_eq!(single[1].to_bits(), single[2].to_bits());
    for policy in Phase2Policy::ALL {
        for sampling in SamplingModel::ALL {
            let two = grid(Scheme::TwoPhase, policy, sampling);
            eprintln!("{policy:?} {sampling:?} {two:?}");
            assert_eq!(two[3], 0.0);
            assert!(two.windows(2).all(|w| w[0] > w[1]));
        }
    }
}
