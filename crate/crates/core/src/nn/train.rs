use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, AdamConfig, AdamState, Network};
use crate::encode::{encode_into, DataPoint, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::asym_loss;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Asymmetry parameter of the loss; must be negative.
    pub loss_a: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Test loss is logged every this many steps (and at both ends).
    pub eval_every: usize,
    /// Cap on test samples used by periodic evaluations; 0 means all. The
    /// final test loss always uses the whole test split.
    pub eval_limit: usize,
    /// Train on OPEN-node points as well as CLOSED ones.
    pub include_open: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 4096,
            batch_size: 1024,
            learning_rate: 0.001,
            loss_a: -2.5,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 256,
            eval_limit: 1024,
            include_open: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.loss_a.is_nan() || self.loss_a >= 0.0 {
            return Err(Error::InvalidArgument(format!("loss parameter a must be negative, got {}", self.loss_a)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub train_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    /// Number of optimizer steps taken before the evaluation.
    pub step: usize,
    pub test_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalPoint>,
    /// Loss over the whole test split after training.
    pub final_test_loss: Option<f64>,
    pub adam_steps: u64,
}

impl TrainLog {
    /// `step,train_loss,test_loss` rows; the test column is empty on steps
    /// without an evaluation. Row 0 holds the pre-training evaluation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_loss,test_loss\n");
        let find = |step: usize| self.evals.iter().find(|e| e.step == step).map(|e| e.test_loss);
        if let Some(t) = find(0) {
            out.push_str(&format!("0,,{t}\n"));
        }
        for r in &self.steps {
            let test = find(r.step).map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.step, r.train_loss, test));
        }
        out
    }
}

fn split_points(dataset: &Dataset, split: Split, include_open: bool) -> Vec<&DataPoint> {
    dataset
        .points_in(split)
        .filter(|p| include_open || p.finalized)
        .collect()
}

/// Mean asymmetric loss of `net` over `points`.
pub fn evaluate_loss(net: &Network, dataset: &Dataset, points: &[&DataPoint], a: f64) -> Result<f64> {
    let preds = predict_points(net, dataset, points)?;
    let targets: Vec<f64> = points.iter().map(|p| p.cost_to_go).collect();
    Ok(asym_loss(&preds, &targets, a)?.0)
}

fn predict_points(net: &Network, dataset: &Dataset, points: &[&DataPoint]) -> Result<Vec<f64>> {
    let scenarios = points
        .iter()
        .map(|p| {
            dataset
                .scenario(p.scenario_id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {}", p.scenario_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    check_geometry(net, &scenarios)?;
    Ok(net.predict_with(points.len(), |i, buf| encode_into(scenarios[i], points[i].cell, buf)))
}

fn check_geometry(net: &Network, scenarios: &[&crate::gridworld::GridScenario]) -> Result<()> {
    let arch = net.architecture();
    for s in scenarios {
        if (arch.input_channels, arch.height, arch.width) != (crate::encode::CHANNELS, s.height(), s.width()) {
            return Err(Error::Shape(format!(
                "scenario {} is {}x{}, network expects {}x{}x{}",
                s.id,
                s.width(),
                s.height(),
                arch.input_channels,
                arch.height,
                arch.width
            )));
        }
    }
    Ok(())
}

/// Trains `net` in place with Adam on minibatches drawn uniformly with
/// replacement from the train split.
pub fn train(net: &mut Network, dataset: &Dataset, config: &TrainConfig) -> Result<TrainLog> {
    config.validate()?;
    let train_points = split_points(dataset, Split::Train, config.include_open);
    let test_points = split_points(dataset, Split::Test, config.include_open);
    if train_points.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if test_points.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let mut log = TrainLog::default();
    if config.steps == 0 {
        return Ok(log);
    }
    let train_scenarios = train_points
        .iter()
        .map(|p| dataset.scenario(p.scenario_id).expect("point scenario exists"))
        .collect::<Vec<_>>();
    check_geometry(net, &train_scenarios)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe = test_points.clone();
    if config.eval_limit > 0 && probe.len() > config.eval_limit {
        probe.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15));
        probe.truncate(config.eval_limit);
    }
    let eval = |net: &Network, step: usize, log: &mut TrainLog| -> Result<()> {
        let test_loss = evaluate_loss(net, dataset, &probe, config.loss_a)?;
        log.evals.push(EvalPoint { step, test_loss });
        Ok(())
    };
    eval(net, 0, &mut log)?;

    let mut state = AdamState::new(net.parameters_mut().iter().map(|p| p.len()));
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 1..=config.steps {
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| rng.gen_range(0..train_points.len())));
        let targets: Vec<f64> = batch.iter().map(|&i| train_points[i].cost_to_go).collect();
        let (loss, grads) = net.loss_and_gradients_with(&targets, config.loss_a, |k, buf| {
            let i = batch[k];
            encode_into(train_scenarios[i], train_points[i].cell, buf)
        });
        adam_step(
            &mut net.parameters_mut(),
            &grads.slices(),
            &mut state,
            config.learning_rate,
            &config.adam,
        )?;
        log.steps.push(StepRecord { step, train_loss: loss });
        if step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0) {
            eval(net, step, &mut log)?;
        }
    }
    log.adam_steps = state.step;
    log.final_test_loss = Some(evaluate_loss(net, dataset, &test_points, config.loss_a)?);
    Ok(log)
}
