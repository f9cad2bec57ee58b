//! Scores one GRPO group: advantages, masked sequence ratios and the clipped
//! surrogate under both ratio modes.

use unitool::rl_math::{score_group, GroupRecord, GrpoConfig, RatioMode, SequenceLogprobs};

fn seq(mask: &[u8], new: &[f64], old: &[f64]) -> SequenceLogprobs {
    SequenceLogprobs {
        mask: mask.to_vec(),
        logp_new: new.to_vec(),
        logp_old: Some(old.to_vec()),
    }
}

fn main() {
    // Masked-out positions (observation tokens) differ wildly and must not matter.
    let group = GroupRecord {
        id: Some("demo".into()),
        rewards: vec![3.5, 2.0, 2.0, 0.5],
        sequences: vec![
            seq(
                &[1, 1, 0, 1],
                &[-0.1, -0.2, -9.0, -0.3],
                &[-0.3, -0.4, -1.0, -0.5],
            ),
            seq(&[1, 0, 1], &[-0.5, -4.0, -0.5], &[-0.5, -0.1, -0.5]),
            seq(&[1, 1], &[-1.0, -1.0], &[-0.9, -0.9]),
            seq(&[1, 1, 1], &[-2.0, -2.0, -2.0], &[-1.5, -1.5, -1.5]),
        ],
    };
    for mode in [RatioMode::Sequence, RatioMode::PerToken] {
        let cfg = GrpoConfig {
            ratio_mode: mode,
            ..GrpoConfig::default()
        };
        let s = score_group(&group, &cfg).unwrap();
        println!("{mode:?}");
        println!(
            "  advantages {:?}",
            s.advantages
                .iter()
                .map(|a| format!("{a:.4}"))
                .collect::<Vec<_>>()
        );
        println!(
            "  ratios     {:?}",
            s.ratios
                .iter()
                .map(|r| format!("{r:.4}"))
                .collect::<Vec<_>>()
        );
        println!("  surrogate  {:.6}", s.surrogate);
    }
}
