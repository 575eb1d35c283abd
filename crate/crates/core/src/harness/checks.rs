//! A fast subset of the invariant suite, run by `blindgain validate`.

use serde::Serialize;

use crate::analysis::{
    epsilon_k, exact_power, moments, varrho_closed_form, varrho_monte_carlo,
};
use crate::channel::{effective_gain, generate, ChannelModel, LargeScaleProfile};
use crate::error::Result;
use crate::estimators::{blind_estimate, Method};
use crate::harness::{run_experiment, BetaSpec, BlockLength, SystemConfig};
use crate::link_sim::draw_symbols;
use crate::precoder::{normalization_alpha, precode};
use crate::rng::SeedTree;
use crate::stats::{map_trials, MeanEstimate};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn within(name: &str, est: MeanEstimate, target: f64, sigmas: f64) -> CheckOutcome {
    let z = est.z_score(target);
    CheckOutcome {
        name: name.to_string(),
        passed: z <= sigmas,
        detail: format!(
            "estimate {:.6e} ± {:.2e}, target {:.6e}, {:.2} stderr",
            est.mean, est.stderr, target, z
        ),
    }
}

/// Run the quick checks with `trials` Monte Carlo draws each.
pub fn run_quick_checks(trials: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let root = SeedTree::new(seed);
    let p20 = LargeScaleProfile::uniform(20, 1.0)?;

    for model in ChannelModel::ALL {
        let closed = varrho_closed_form(model, 100, &p20, 0)?;
        let mc = varrho_monte_carlo(model, 100, &p20, 0, trials, seed)?;
        out.push(within(&format!("varrho closed form vs Monte Carlo ({model})"), mc, closed, 3.0));
    }

    let single = LargeScaleProfile::uniform(1, 1.0)?;
    for model in ChannelModel::ALL {
        let tree = root.child(1).child(model.tag());
        let g4 = map_trials(trials, |t| {
            let ch = generate(model, 20, &single, &mut tree.stream(t)).expect("valid dims");
            effective_gain(&ch, 0).expect("user 0").powi(2)
        });
        let target = moments(model, 20, 1.0)?.fourth;
        let est = MeanEstimate::from_samples(&g4).expect("trials >= 1");
        out.push(within(&format!("fourth moment of the gain, M = 20 ({model})"), est, target, 3.0));
    }

    let state = normalization_alpha(10.0, 100, &p20)?;
    let mut worst = 0.0f64;
    for model in ChannelModel::ALL {
        let tree = root.child(2).child(model.tag());
        for t in 0..100 {
            let ch = generate(model, 100, &p20, &mut tree.stream(t))?;
            let xi = exact_power(&ch, &state, 0)?;
            let bar = p20.sum_excluding(0)?;
            let a = blind_estimate(xi, state.alpha(), bar)?.value;
            let back = state.alpha() * a * a + state.alpha() * bar * a + 1.0;
            let gain = effective_gain(&ch, 0)?;
            let closed = -bar / 2.0 + ((bar / 2.0 + gain).powi(2) + epsilon_k(&ch, &p20, 0)?).sqrt();
            worst = worst.max((back - xi).abs() / xi).max((a - closed).abs() / a);
        }
    }
    out.push(CheckOutcome {
        name: "blind estimate inverts the exact received power".into(),
        passed: worst <= 1e-9,
        detail: format!("worst relative residual {worst:.2e}"),
    });

    for model in ChannelModel::ALL {
        let tree = root.child(3).child(model.tag());
        let power = map_trials(trials, |t| {
            let mut rng = tree.stream(t);
            let ch = generate(model, 100, &p20, &mut rng).expect("valid dims");
            let s = draw_symbols(20, 1, &mut rng).expect("valid dims");
            let x = precode(&ch, s.slot(0), &state).expect("matching dims");
            x.iter().map(|z| z.norm_sqr()).sum::<f64>()
        });
        let est = MeanEstimate::from_samples(&power).expect("trials >= 1");
        let rel = (est.mean - state.rho()).abs() / state.rho();
        out.push(CheckOutcome {
            name: format!("average transmit power equals rho ({model})"),
            passed: rel <= 0.02,
            detail: format!("mean {:.5} vs {}, relative error {rel:.2e}", est.mean, state.rho()),
        });
    }

    let cfg = SystemConfig {
        antennas: 40,
        users: 8,
        rho_db_grid: vec![0.0, 10.0],
        block_lengths: vec![BlockLength::Finite(50), BlockLength::Infinite],
        betas: BetaSpec::Spec("uniform:1.0".into()),
        models: ChannelModel::ALL.to_vec(),
        estimators: vec![Method::Statistical, Method::Blind, Method::PilotLmmse],
        trials: (trials / 10).max(10),
        seed,
        per_user: false,
    };
    let first = run_experiment(&cfg)?.to_csv_string();
    let second = run_experiment(&cfg)?.to_csv_string();
    out.push(CheckOutcome {
        name: "sweep output is reproducible".into(),
        passed: first == second,
        detail: format!("{} bytes of CSV", first.len()),
    });

    Ok(out)
}
