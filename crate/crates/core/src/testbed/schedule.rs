use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{ConfigError, ScenarioConfig};
use super::rng_stream;
use crate::reliability::{ActionRecord, Outcome};

pub const BACKGROUND_POLL_ACTION: &str = "Background Poll";

const SCHEDULE_STREAM: u64 = 1_000;
const FAILURE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionKind {
    Foreground,
    BackgroundPoll,
}

/// One scheduled unit of app activity on a device.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledAction {
    pub start_us: u64,
    pub device_idx: usize,
    pub app_idx: usize,
    /// Index into the app's actions; `None` for background polls.
    pub action_idx: Option<usize>,
    pub kind: ActionKind,
    pub device_id: String,
    pub app_name: String,
    pub action_name: String,
    pub duration_us: u64,
    pub steps_total: usize,
    pub steps_executed: usize,
    pub outcome: Outcome,
}

impl ScheduledAction {
    pub fn record(&self) -> ActionRecord {
        ActionRecord {
            ts_us: self.start_us,
            device_id: self.device_id.clone(),
            app_name: self.app_name.clone(),
            action_name: self.action_name.clone(),
            outcome: self.outcome,
        }
    }
}

fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

/// Weighted foreground actions per device, one at a time, plus periodic
/// background polls for apps that keep running after their first action.
///
/// Choice is by normalized weight over every action of every installed app.
/// All outcomes are `Success` here; see [`inject_failures`].
pub fn schedule_actions(config: &ScenarioConfig) -> Result<Vec<ScheduledAction>, ConfigError> {
    config.validate()?;
    let start = config.start_time_us;
    let end = start + secs_to_us(config.duration_s);
    let mut out = Vec::new();

    for (d_idx, dev) in config.devices.iter().enumerate() {
        let mut rng = rng_stream(config.seed, SCHEDULE_STREAM + d_idx as u64);
        let choices: Vec<(usize, usize, f64)> = dev
            .installed_apps
            .iter()
            .map(|n| config.app_index(n).expect("validated"))
            .flat_map(|a| {
                config.apps[a]
                    .actions
                    .iter()
                    .enumerate()
                    .map(move |(i, act)| (a, i, act.weight))
            })
            .collect();
        let total: f64 = choices.iter().map(|c| c.2).sum();

        let mut first_use: Vec<Option<u64>> = vec![None; config.apps.len()];
        let mut t = start + secs_to_us(config.idle_gap_s.sample(&mut rng));
        while t < end {
            let mut x = rng.random::<f64>() * total;
            let &(a_idx, act_idx, _) = choices
                .iter()
                .find(|c| {
                    if x < c.2 {
                        true
                    } else {
                        x -= c.2;
                        false
                    }
                })
                .unwrap_or_else(|| choices.iter().rfind(|c| c.2 > 0.0).expect("positive weight"));
            let app = &config.apps[a_idx];
            let action = &app.actions[act_idx];
            let duration_us = secs_to_us(action.duration_s.sample(&mut rng));
            first_use[a_idx].get_or_insert(t);
            out.push(ScheduledAction {
                start_us: t,
                device_idx: d_idx,
                app_idx: a_idx,
                action_idx: Some(act_idx),
                kind: ActionKind::Foreground,
                device_id: dev.device_id.clone(),
                app_name: app.app_name.clone(),
                action_name: action.action_name.clone(),
                duration_us,
                steps_total: action.steps.len(),
                steps_executed: action.steps.len(),
                outcome: Outcome::Success,
            });
            t += duration_us + secs_to_us(config.idle_gap_s.sample(&mut rng));
        }

        for (a_idx, first) in first_use.iter().enumerate() {
            let (Some(first), Some(period)) = (first, config.apps[a_idx].background_poll_period_s) else {
                continue;
            };
            let app = &config.apps[a_idx];
            let mut p = *first + secs_to_us(period * rng.random_range(0.5..1.5));
            while p < end {
                out.push(ScheduledAction {
                    start_us: p,
                    device_idx: d_idx,
                    app_idx: a_idx,
                    action_idx: None,
                    kind: ActionKind::BackgroundPoll,
                    device_id: dev.device_id.clone(),
                    app_name: app.app_name.clone(),
                    action_name: BACKGROUND_POLL_ACTION.to_string(),
                    duration_us: 0,
                    steps_total: app.poll_steps.len(),
                    steps_executed: app.poll_steps.len(),
                    outcome: Outcome::Success,
                });
                p += secs_to_us(period * rng.random_range(0.8..1.2)).max(1);
            }
        }
    }
    out.sort_by(|a, b| {
        (a.start_us, a.device_idx, a.kind, a.app_idx).cmp(&(b.start_us, b.device_idx, b.kind, b.app_idx))
    });
    Ok(out)
}

/// Draws launch and execution failures for foreground actions.
///
/// `rates(device_id, app_name)` gives `(lf, ef)`. Each foreground action
/// consumes exactly three draws so one action's outcome never shifts another's.
/// An execution failure keeps a uniformly chosen strict prefix of the steps.
pub fn inject_failures(
    mut schedule: Vec<ScheduledAction>,
    rates: impl Fn(&str, &str) -> (f64, f64),
    seed: u64,
) -> Vec<ScheduledAction> {
    let mut rng: ChaCha8Rng = rng_stream(seed, FAILURE_STREAM);
    for a in schedule.iter_mut().filter(|a| a.kind == ActionKind::Foreground) {
        let (lf, ef) = rates(&a.device_id, &a.app_name);
        let u_launch: f64 = rng.random();
        let u_exec: f64 = rng.random();
        let u_step: f64 = rng.random();
        if u_launch < lf {
            a.outcome = Outcome::LaunchFailure;
            a.steps_executed = 0;
        } else if u_exec < ef {
            a.outcome = Outcome::ExecutionFailure;
            a.steps_executed = ((u_step * a.steps_total as f64) as usize).min(a.steps_total.saturating_sub(1));
        } else {
            a.outcome = Outcome::Success;
            a.steps_executed = a.steps_total;
        }
    }
    schedule
}

/// The automation run log: foreground attempts in schedule order.
pub fn run_log(schedule: &[ScheduledAction]) -> Vec<ActionRecord> {
    schedule
        .iter()
        .filter(|a| a.kind == ActionKind::Foreground)
        .map(ScheduledAction::record)
        .collect()
}
