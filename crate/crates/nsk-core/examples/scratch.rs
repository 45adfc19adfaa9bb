use nsk_core::decay::{linear_decay_oracle, DecayExperiment, DecayMode, DecayTarget};
use nsk_core::model::PhysParams;

fn main() {
    let p = PhysParams::uniform(1.0, 1.0, 2.0, 1.0).unwrap();
    for sigma1 in [0.6, 0.75, 1.0, 1.25] {
        let exp = DecayExperiment {
            dim: 3, sigma1, q: 2.0, p: 2.0, r: 2.0,
            l_values: vec![0.0], amplitude: 0.001, cutoff: 0.5,
            t0: 0.25, fit_window: (8.0, 80.0), samples_per_decade: 12,
            seed: 9, mode: DecayMode::LinearOracle,
        };
        let rep = linear_decay_oracle(&exp, &p).unwrap();
        let s = |t: DecayTarget| {
            let f = rep.series.iter().find(|s| s.target == t).unwrap().fit.unwrap();
            (f.slope, f.predicted)
        };
        let (da, pa) = s(DecayTarget::Density);
        let (dm, pm) = s(DecayTarget::Momentum);
        println!(
            "sigma1 {sigma1}: density {da:.4} (pred {pa}), momentum {dm:.4} (pred {pm}), gap {:.4}, errs {:.4} {:.4}",
            dm - da, (da - pa).abs(), (dm - pm).abs()
        );
    }
}
