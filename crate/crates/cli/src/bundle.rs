//! Bundled simulation designs for `replicate-paper`.

use apgw::simulate::{CovariateLaw, ScenarioConfig};
use apgw::{ModelSpec, OptimizerConfig, RegressionCoefficients};

use crate::run::{CliResult, Failure};

/// `nu = ln(kappa + 1)` for kappa in {0, 1/4, 1/2, 1, 2, 4, inf}.
pub fn nu_grid() -> Vec<f64> {
    vec![
        0.0,
        1.25f64.ln(),
        1.5f64.ln(),
        2f64.ln(),
        3f64.ln(),
        5f64.ln(),
        f64::INFINITY,
    ]
}

fn spec(text: &str, names: Vec<String>, two_scales: bool, fix: &[(&str, f64)]) -> ModelSpec {
    let mut s = ModelSpec::parse(text, names, two_scales).expect("bundled spec parses");
    for (k, v) in fix {
        s = s.fix_key(k, *v).expect("bundled fix key");
    }
    s
}

/// Scenario for `table` in {3, 4, B1, B2}.
///
/// `3`: no covariates, `(tau, beta, alpha) = (0.8, 0.5, -0.3)`, fitted with
/// both scales free, beta fixed at its truth and beta fixed at zero.
/// `4`, `B1`, `B2`: one Bernoulli(0.5) covariate with `M(tau,alpha)` truth
/// `(0.8, 0.6; 0.2, -0.5)`, fitted as `M(tau,beta,alpha)`, `M(tau,alpha)` and
/// `M(beta,alpha)`; `B1` and `B2` default to n = 500 and n = 100.
pub fn design(table: &str, n: Option<usize>, replicates: usize, seed: u64) -> CliResult<ScenarioConfig> {
    let (default_n, law, truth, specs) = match table {
        "3" => (
            1000,
            CovariateLaw::None,
            RegressionCoefficients::from_blocks(vec![0.8], vec![0.5], vec![-0.3], vec![0.0]).expect("truth"),
            vec![
                spec("M(tau,beta)", vec![], true, &[]),
                spec("M(tau)", vec![], false, &[("beta0", 0.5)]),
                spec("M(tau)", vec![], false, &[("beta0", 0.0)]),
            ],
        ),
        "4" | "B1" | "B2" => {
            let law = CovariateLaw::Bernoulli { p: 0.5 };
            let names = law.names();
            (
                match table {
                    "4" => 1000,
                    "B1" => 500,
                    _ => 100,
                },
                law,
                RegressionCoefficients::from_blocks(vec![0.8, 0.6], vec![0.0, 0.0], vec![0.2, -0.5], vec![0.0, 0.0])
                    .expect("truth"),
                vec![
                    spec("M(tau,beta,alpha)", names.clone(), true, &[]),
                    spec("M(tau,alpha)", names.clone(), false, &[]),
                    spec("M(beta,alpha)", names, false, &[]),
                ],
            )
        }
        other => {
            return Err(Failure::Validation(format!(
                "--table: unknown design `{other}` (expected 3, 4, B1 or B2)"
            )))
        }
    };
    Ok(ScenarioConfig {
        n: n.unwrap_or(default_n),
        true_coefs: truth,
        nu_grid: nu_grid(),
        target_censoring: 0.3,
        n_replicates: replicates,
        fit_specs: specs,
        seed,
        covariate_law: law,
        optimizer: OptimizerConfig {
            seed,
            ..OptimizerConfig::default()
        },
    })
}
