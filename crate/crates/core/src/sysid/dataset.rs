use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ProblemMode, SysidError};
use crate::control::{Direction, ReferenceCircle};
use crate::dynamics::{rollout, PlantInput, PlantState, RolloutConfig, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Ground-truth generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSpec {
    pub count: usize,
    /// Share of left (counter-clockwise) turns.
    pub left_fraction: f64,
    /// Share of trajectories held out for validation.
    pub val_fraction: f64,
    /// Commanded speed, m/s.
    pub v_x: f64,
    /// Lane radius range for closed-loop references, m.
    pub radius_range: [f64; 2],
    /// Standard deviation of Gaussian noise added to reference positions, m.
    pub position_noise: f64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        Self {
            count: 16,
            left_fraction: 0.5,
            val_fraction: 0.25,
            v_x: 1.0,
            radius_range: [25.0, 35.0],
            position_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: usize,
    pub split: Split,
    pub seed: u64,
    pub initial: PlantState<f64>,
    /// Lane to follow in closed-loop modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<ReferenceCircle>,
    /// Logged `(delta_cmd, v_cmd)` per step for open-loop replay.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<[f64; 2]>,
    /// Recorded states, `commands.len() + 1` of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<PlantState<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub mode: ProblemMode,
    pub seed: u64,
    pub rollout: RolloutConfig,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&DatasetEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn validate(&self) -> Result<(), SysidError> {
        let bad = |msg: String| Err(SysidError::Dataset(msg));
        if self.split(Split::Train).is_empty() || self.split(Split::Val).is_empty() {
            return bad("dataset needs both train and val entries".into());
        }
        for e in &self.entries {
            match self.mode {
                ProblemMode::TrajectoryMatch => {
                    if e.commands.is_empty() || e.reference.len() != e.commands.len() + 1 {
                        return bad(format!("entry {} lacks commands or reference states", e.id));
                    }
                }
                ProblemMode::LaneKeeping | ProblemMode::GainDirect => {
                    if e.circle.is_none() {
                        return bad(format!("entry {} lacks a reference circle", e.id));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Alternating left/right turn flags with the requested share of lefts.
fn turn_plan(count: usize, left_fraction: f64) -> Vec<bool> {
    let lefts = (count as f64 * left_fraction).round() as usize;
    let lefts = lefts.min(count);
    let rights = count - lefts;
    let mut plan = Vec::with_capacity(count);
    let (mut l, mut r) = (0, 0);
    while l < lefts || r < rights {
        if l < lefts {
            plan.push(true);
            l += 1;
        }
        if r < rights {
            plan.push(false);
            r += 1;
        }
    }
    plan
}

/// Synthesize a dataset from known parameters.
///
/// Open-loop mode drives each trajectory at full steering lock; closed-loop
/// modes store circles with `k = 1` and `h = +-r`. The last
/// `val_fraction` of the (left/right interleaved) entries form the
/// validation split.
pub fn generate_ground_truth(
    truth: &VehicleParams<f64>,
    spec: &GenerateSpec,
    mode: ProblemMode,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<Dataset, SysidError> {
    if spec.count < 2 {
        return Err(SysidError::Dataset(
            "count must be at least 2 for a train/val split".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.left_fraction) || !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(SysidError::Dataset("fractions must lie in [0, 1)".into()));
    }
    let [r_lo, r_hi] = spec.radius_range;
    if !(r_lo > 0.0 && r_lo <= r_hi) {
        return Err(SysidError::Dataset("invalid radius range".into()));
    }
    if !(spec.position_noise >= 0.0) {
        return Err(SysidError::Dataset("position_noise must be non-negative".into()));
    }
    truth.validate()?;
    cfg.validate()?;

    let n_val = ((spec.count as f64 * spec.val_fraction).round() as usize).clamp(1, spec.count - 1);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let plan = turn_plan(spec.count, spec.left_fraction);
    let mut entries = Vec::with_capacity(spec.count);
    for (id, &left) in plan.iter().enumerate() {
        let entry_seed: u64 = master.random();
        let mut rng = ChaCha8Rng::seed_from_u64(entry_seed);
        let split = if id >= spec.count - n_val {
            Split::Val
        } else {
            Split::Train
        };
        let entry = match mode {
            ProblemMode::TrajectoryMatch => {
                let delta = if left { truth.delta_max } else { -truth.delta_max };
                let initial = PlantState::moving(0.0, 0.0, FRAC_PI_2, spec.v_x);
                let commands = vec![[delta, spec.v_x]; cfg.steps];
                let mut states = rollout(
                    initial,
                    |t, _| PlantInput::direct(commands[t][0], commands[t][1]),
                    truth,
                    cfg,
                )
                .map_err(|_| SysidError::GenerationDiverged { seed: entry_seed })?;
                if spec.position_noise > 0.0 {
                    let noise = Normal::new(0.0, spec.position_noise)
                        .map_err(|e| SysidError::Dataset(e.to_string()))?;
                    for s in states.iter_mut() {
                        s.s_x += noise.sample(&mut rng);
                        s.s_y += noise.sample(&mut rng);
                    }
                }
                DatasetEntry {
                    id,
                    split,
                    seed: entry_seed,
                    initial,
                    circle: None,
                    commands,
                    reference: states,
                }
            }
            ProblemMode::LaneKeeping | ProblemMode::GainDirect => {
                let radius = if r_hi > r_lo {
                    rng.random_range(r_lo..=r_hi)
                } else {
                    r_lo
                };
                let dir = if left { Direction::Ccw } else { Direction::Cw };
                DatasetEntry {
                    id,
                    split,
                    seed: entry_seed,
                    initial: PlantState::at_rest(0.0, 0.0, FRAC_PI_2),
                    circle: Some(ReferenceCircle::offset_from_origin(radius, dir)?),
                    commands: Vec::new(),
                    reference: Vec::new(),
                }
            }
        };
        entries.push(entry);
    }
    Ok(Dataset {
        mode,
        seed,
        rollout: *cfg,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> RolloutConfig {
        RolloutConfig {
            steps: 200,
            ..Default::default()
        }
    }

    #[test]
    fn even_turn_split() {
        let d = generate_ground_truth(
            &VehicleParams::f1tenth(),
            &GenerateSpec::default(),
            ProblemMode::TrajectoryMatch,
            &short(),
            3,
        )
        .unwrap();
        assert_eq!(d.entries.len(), 16);
        let lefts = d.entries.iter().filter(|e| e.commands[0][0] > 0.0).count();
        assert_eq!(lefts, 8);
        assert_eq!(d.split(Split::Val).len(), 4);
        // Both turn directions appear in each split.
        for split in [Split::Train, Split::Val] {
            let s = d.split(split);
            assert!(s.iter().any(|e| e.commands[0][0] > 0.0));
            assert!(s.iter().any(|e| e.commands[0][0] < 0.0));
        }
        d.validate().unwrap();
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = GenerateSpec {
            position_noise: 0.01,
            ..Default::default()
        };
        let gen = |seed| {
            generate_ground_truth(&VehicleParams::f1tenth(), &spec, ProblemMode::TrajectoryMatch, &short(), seed)
                .unwrap()
        };
        assert_eq!(gen(5), gen(5));
        assert_ne!(gen(5), gen(6));
    }

    #[test]
    fn lane_circles_in_range() {
        let d = generate_ground_truth(
            &VehicleParams::f1tenth(),
            &GenerateSpec::default(),
            ProblemMode::LaneKeeping,
            &short(),
            1,
        )
        .unwrap();
        for e in &d.entries {
            let c = e.circle.unwrap();
            assert!((25.0..=35.0).contains(&c.radius));
            assert_eq!(c.center[1], 1.0);
            assert_eq!(c.center[0].abs(), c.radius);
        }
    }

    #[test]
    fn count_one_is_rejected() {
        let spec = GenerateSpec {
            count: 1,
            ..Default::default()
        };
        let err = generate_ground_truth(
            &VehicleParams::f1tenth(),
            &spec,
            ProblemMode::TrajectoryMatch,
            &short(),
            0,
        );
        assert!(matches!(err, Err(SysidError::Dataset(_))));
    }
}
