use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Graph, Var};

/// Finite-difference gradient checker.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    /// Upper bound on the number of coordinates probed; all are probed when
    /// the inputs have fewer.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-4,
            max_coords: 256,
            seed: 0,
        }
    }
}

/// An input to a checked function: shape plus values.
#[derive(Debug, Clone)]
pub struct CheckInput {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl CheckInput {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        CheckInput { shape, value }
    }
}

impl From<&crate::numerics::Tensor> for CheckInput {
    fn from(t: &crate::numerics::Tensor) -> Self {
        CheckInput::new(t.shape().to_vec(), t.to_f64())
    }
}

fn eval<F>(inputs: &[CheckInput], f: &F) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|i| g.leaf(i.shape.clone(), i.value.clone(), true))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    Ok((g, vars, out))
}

/// Returns the max over probed coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`,
/// with `numeric` from central differences.
pub fn grad_check<F>(inputs: &[CheckInput], cfg: &GradCheck, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    assert!(cfg.eps > 0.0, "eps must be positive");
    let (mut g, vars, out) = eval(inputs, &f)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v)).collect();

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(t, i)| (0..i.value.len()).map(move |j| (t, j)))
        .collect();
    let probe: Vec<(usize, usize)> = if coords.len() <= cfg.max_coords {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, coords.len(), cfg.max_coords).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| coords[i]).collect()
    };

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (t, j) in probe {
        let orig = work[t].value[j];
        work[t].value[j] = orig + cfg.eps;
        let (gp, _, op) = eval(&work, &f)?;
        work[t].value[j] = orig - cfg.eps;
        let (gm, _, om) = eval(&work, &f)?;
        work[t].value[j] = orig;
        let numeric = (gp.scalar(op) - gm.scalar(om)) / (2.0 * cfg.eps);
        let a = analytic[t][j];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
