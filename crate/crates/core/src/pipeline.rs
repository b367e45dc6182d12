//! End-to-end runs over the reference room: the bandwidth table, the tone
//! detection report, the multi-user scenarios and the illuminance map. Each
//! run returns its result tables as delimited text so callers only write
//! files.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    allocate, compute_cci, compute_cnr_table, to_db, AllocationMap, Assignment, UserTerminal,
};
use crate::channel::{three_db_bandwidth, Bandwidth, ChannelConfig, ChannelModel, ThreeDbCriterion};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::link::{evaluate_link, UserLink};
use crate::scene::{
    illuminance_map, mobile_sweep, Color, IlluminanceMap, IntensityBasis, ReceiverKind, Scene, SceneConfig,
    UserLayout, COMMUNICATION_FLOOR,
};
use crate::scm::{
    detection_probabilities, fit_distributions, optimal_threshold, random_positions, tone_samples_at,
    total_noise_sigma, CaseCounts, DetectionModel, DistributionEstimate, NoiseModel, TonePlan,
};

/// First line of every table this module emits.
pub const SCHEMA_LINE: &str = "# schema-version: 1";

pub const TABLE2_ROWS: [f64; 8] = [0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5];
pub const TABLE2_COLUMNS: [f64; 2] = [0.5, 1.5];

/// Minimum floor illuminance required for reading and office work, lx.
pub const REQUIRED_LUX: f64 = 300.0;

/// Everything a run depends on. Loadable from a TOML scenario file; every
/// field defaults to the reference setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub channel: ChannelConfig,
    pub noise: NoiseModel,
    pub tones: TonePlan,
    pub scenarios: Vec<u8>,
    pub receivers: Vec<ReceiverKind>,
    pub lanes: Vec<f64>,
    pub seed: u64,
    pub detection_positions: usize,
    pub histogram_bins: usize,
    pub threedb: ThreeDbCriterion,
    /// Doubles both element sizes.
    pub fast: bool,
    pub illuminance_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneConfig::default(),
            channel: ChannelConfig::default(),
            noise: NoiseModel::default(),
            tones: TonePlan::default(),
            scenarios: vec![1, 2, 3, 4],
            receivers: ReceiverKind::ALL.to_vec(),
            lanes: vec![0.5, 1.5],
            seed: 1,
            detection_positions: 1000,
            histogram_bins: 30,
            threedb: ThreeDbCriterion::Sqrt2,
            fast: false,
            illuminance_step: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("no scenario selected".into()));
        }
        if let Some(s) = self.scenarios.iter().find(|s| !(1..=4).contains(*s)) {
            return Err(Error::InvalidConfig(format!("no scenario {s}")));
        }
        if self.receivers.is_empty() {
            return Err(Error::InvalidConfig("no receiver selected".into()));
        }
        if !(self.illuminance_step > 0.0) {
            return Err(Error::InvalidConfig("illuminance step must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
        }
        Ok(())
    }

    /// Scene configuration with the fast-mode element sizes applied.
    pub fn effective_scene(&self) -> SceneConfig {
        let mut s = self.scene.clone();
        if self.fast {
            s.room.element_size_first *= 2.0;
            s.room.element_size_second *= 2.0;
        }
        s
    }

    pub fn build_model(&self) -> Result<ChannelModel> {
        ChannelModel::new(Scene::build(&self.effective_scene())?, self.channel.clone())
    }
}

/// Receiver noise inside one tone filter, without the tone's own shot noise.
pub fn tone_noise_sigma(noise: &NoiseModel, tones: &TonePlan, responsivity_green: f64) -> Result<f64> {
    total_noise_sigma(noise, responsivity_green, 0.0, tones.bpf_bandwidth)
}

fn fmt_opt_ghz(b: Bandwidth) -> String {
    match b {
        Bandwidth::Hz(f) => format!("{:.4}", f / 1e9),
        Bandwidth::Flat => "flat".into(),
    }
}

// ---------------------------------------------------------------------------
// Bandwidth table
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthCell {
    pub kind: ReceiverKind,
    pub position: Vec3,
    pub unit: usize,
    pub face: usize,
    pub bandwidth: Bandwidth,
}

/// 3-dB bandwidth of the strongest link (unit and face by green power) at
/// each table position.
pub fn table2_cells(model: &ChannelModel, kinds: &[ReceiverKind], criterion: ThreeDbCriterion) -> Result<Vec<BandwidthCell>> {
    let mut jobs = Vec::new();
    for &kind in kinds {
        for &x in &TABLE2_COLUMNS {
            for &y in &TABLE2_ROWS {
                jobs.push((kind, Vec3::new(x, y, COMMUNICATION_FLOOR)));
            }
        }
    }
    jobs.into_iter()
        .map(|(kind, position)| {
            let rx = model.scene().receiver(kind, position)?;
            let mut best = (0, 0, f64::NEG_INFINITY);
            for u in &model.scene().units {
                for (f, p) in model.receive_power(u.id, &rx, Color::Green).into_iter().enumerate() {
                    if p > best.2 {
                        best = (u.id, f, p);
                    }
                }
            }
            let ir = model.impulse_response(best.0, &rx.photodetector(best.1, Color::Green));
            Ok(BandwidthCell {
                kind,
                position,
                unit: best.0,
                face: best.1,
                bandwidth: three_db_bandwidth(&ir, criterion)?,
            })
        })
        .collect()
}

pub fn table2_csv(cells: &[BandwidthCell]) -> String {
    let mut s = format!("{SCHEMA_LINE}\nreceiver,x_m,y_m,unit,face,bandwidth_ghz\n");
    for c in cells {
        let _ = writeln!(
            s,
            "{},{:.2},{:.2},{},{},{}",
            c.kind.label(),
            c.position.x,
            c.position.y,
            c.unit,
            c.face + 1,
            fmt_opt_ghz(c.bandwidth)
        );
    }
    s
}

pub fn run_table2(cfg: &RunConfig, model: &ChannelModel) -> Result<String> {
    Ok(table2_csv(&table2_cells(model, &cfg.receivers, cfg.threedb)?))
}

// ---------------------------------------------------------------------------
// Tone detection
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub kind: ReceiverKind,
    pub counts: CaseCounts,
    pub sigma_t: f64,
    /// `None` when fewer than two positions fall in case two.
    pub estimate: Option<DistributionEstimate>,
    pub model: Option<DetectionModel>,
}

impl DetectionReport {
    pub fn to_text(&self) -> String {
        let c = &self.counts;
        let mut s = format!("{SCHEMA_LINE}\n");
        let _ = writeln!(s, "receiver = {}", self.kind.label());
        let _ = writeln!(s, "positions_no_los = {}", c.no_los);
        let _ = writeln!(s, "positions_case_one = {}", c.one);
        let _ = writeln!(s, "positions_case_two = {}", c.two);
        let _ = writeln!(s, "positions_case_three = {}", c.three_or_more);
        match &self.model {
            Some(m) => s.push_str(&m.to_key_values()),
            None => {
                let _ = writeln!(s, "sigma_t = {:.9e}", self.sigma_t);
                let _ = writeln!(s, "status = too few case-two positions to fit");
            }
        }
        s
    }
}

pub fn detection_report(cfg: &RunConfig, model: &ChannelModel, kind: ReceiverKind) -> Result<DetectionReport> {
    if cfg.detection_positions < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 detection positions, got {}",
            cfg.detection_positions
        )));
    }
    let scene = model.scene();
    let positions = random_positions(scene.room.width, scene.room.length, cfg.detection_positions, cfg.seed);
    let samples = tone_samples_at(model, kind, &positions)?;
    let counts = samples.counts;
    let r_g = scene.config.receivers.responsivity[Color::Green];
    let sigma_t = tone_noise_sigma(&cfg.noise, &cfg.tones, r_g)?;
    if samples.desired.len() < 2 {
        return Ok(DetectionReport {
            kind,
            counts,
            sigma_t,
            estimate: None,
            model: None,
        });
    }
    let estimate = fit_distributions(samples, cfg.histogram_bins)?;
    let threshold = optimal_threshold(&estimate.distributions, sigma_t)?;
    let dm = detection_probabilities(&estimate.distributions, sigma_t, threshold, scene.units.len());
    Ok(DetectionReport {
        kind,
        counts,
        sigma_t,
        estimate: Some(estimate),
        model: Some(dm),
    })
}

// ---------------------------------------------------------------------------
// Multi-user scenarios
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct UserOutcome {
    pub position: Vec3,
    pub stationary: bool,
    /// CNR of the serving tone, dB; `None` when unserved.
    pub cnr_db: Option<f64>,
    /// Green-tone interference on the serving face, A².
    pub i_green: f64,
    pub link: UserLink,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionOutcome {
    pub scenario: u8,
    pub kind: ReceiverKind,
    pub mobile: Vec3,
    pub allocation: AllocationMap,
    pub users: Vec<UserOutcome>,
}

impl PositionOutcome {
    pub fn total_rate(&self) -> f64 {
        self.users.iter().map(|u| u.link.aggregate()).sum()
    }

    pub fn user(&self, id: usize) -> &UserOutcome {
        self.users.iter().find(|u| u.link.user == id).expect("unknown user")
    }
}

pub fn evaluate_position(
    model: &ChannelModel,
    noise: &NoiseModel,
    sigma_t: f64,
    kind: ReceiverKind,
    layout: &UserLayout,
    mobile: Vec3,
) -> Result<PositionOutcome> {
    let scene = model.scene();
    let mut terminals = Vec::new();
    for &(user, p) in &layout.stationary_users {
        terminals.push(UserTerminal {
            user,
            stationary: true,
            receiver: scene.receiver(kind, p)?,
        });
    }
    terminals.push(UserTerminal {
        user: layout.mobile_user.0,
        stationary: false,
        receiver: scene.receiver(kind, mobile)?,
    });
    let table = compute_cnr_table(model, &terminals, sigma_t);
    let map = allocate(&table, kind)?;
    let cci = compute_cci(model, &terminals, &map);
    let mut users = Vec::with_capacity(terminals.len());
    for (row, t) in terminals.iter().enumerate() {
        let outcome = match (map.assignments[row], &cci.users[row]) {
            (Assignment::Served { unit, .. }, Some(c)) => UserOutcome {
                position: t.receiver.position,
                stationary: t.stationary,
                cnr_db: Some(to_db(table.entry(row, unit).cnr)),
                i_green: c.green(),
                link: UserLink {
                    user: t.user,
                    assignment: map.assignments[row],
                    colors: evaluate_link(model, &t.receiver, unit, c, noise)?,
                },
            },
            _ => UserOutcome {
                position: t.receiver.position,
                stationary: t.stationary,
                cnr_db: None,
                i_green: 0.0,
                link: UserLink::unserved(t.user),
            },
        };
        users.push(outcome);
    }
    Ok(PositionOutcome {
        scenario: layout.scenario_id,
        kind,
        mobile,
        allocation: map,
        users,
    })
}

/// Every (scenario, receiver, mobile position) in the configured sweep, in
/// that nesting order.
pub fn scenario_outcomes(cfg: &RunConfig, model: &ChannelModel) -> Result<Vec<PositionOutcome>> {
    let r_g = model.scene().config.receivers.responsivity[Color::Green];
    let sigma_t = tone_noise_sigma(&cfg.noise, &cfg.tones, r_g)?;
    let length = model.scene().room.length;
    let mut jobs = Vec::new();
    for &s in &cfg.scenarios {
        let layout = UserLayout::scenario(s)?;
        for &kind in &cfg.receivers {
            for p in mobile_sweep(&cfg.lanes, length) {
                jobs.push((layout.clone(), kind, p));
            }
        }
    }
    // Units trace once up front so the parallel section only reads.
    model.prepare_all();
    jobs.par_iter()
        .map(|(layout, kind, p)| evaluate_position(model, &cfg.noise, sigma_t, *kind, layout, *p))
        .collect()
}

/// One row per (position, user, color).
pub fn scenario_csv(outcomes: &[PositionOutcome]) -> String {
    let mut s = format!(
        "{SCHEMA_LINE}\nscenario,receiver,mobile_x,mobile_y,user,user_x,user_y,stationary,unit,face,cnr_db,i_green_a2,color,sinr_db,rate_bps,aggregate_bps\n"
    );
    for o in outcomes {
        for u in &o.users {
            let (unit, face) = match u.link.assignment {
                Assignment::Served { unit, face } => (unit.to_string(), (face + 1).to_string()),
                Assignment::Unserved => ("unserved".into(), String::new()),
            };
            let cnr = u.cnr_db.map(|c| format!("{c:.3}")).unwrap_or_default();
            for (color, c) in u.link.colors.iter() {
                let sinr_db = if c.sinr > 0.0 { format!("{:.3}", to_db(c.sinr)) } else { String::new() };
                let _ = writeln!(
                    s,
                    "{},{},{:.2},{:.2},{},{:.2},{:.2},{},{},{},{},{:.6e},{},{},{:.6e},{:.6e}",
                    o.scenario,
                    o.kind.label(),
                    o.mobile.x,
                    o.mobile.y,
                    u.link.user,
                    u.position.x,
                    u.position.y,
                    u.stationary,
                    unit,
                    if face.is_empty() { "" } else { &face },
                    cnr,
                    u.i_green,
                    color,
                    sinr_db,
                    c.rate,
                    u.link.aggregate()
                );
            }
        }
    }
    s
}

/// Aggregate rate per user along the sweep, one file per scenario and
/// receiver: columns mobile_x, mobile_y, then one per user.
pub fn rate_curves(outcomes: &[PositionOutcome]) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = Vec::new();
    for o in outcomes {
        let name = format!("rates_s{}_{}.csv", o.scenario, o.kind.label().to_lowercase().replace('-', ""));
        if files.last().map(|f| &f.0) != Some(&name) {
            let mut header = format!("{SCHEMA_LINE}\nmobile_x,mobile_y");
            for u in &o.users {
                let _ = write!(header, ",user{}_bps", u.link.user);
            }
            header.push('\n');
            files.push((name, header));
        }
        let body = &mut files.last_mut().unwrap().1;
        let _ = write!(body, "{:.2},{:.2}", o.mobile.x, o.mobile.y);
        for u in &o.users {
            let _ = write!(body, ",{:.6e}", u.link.aggregate());
        }
        body.push('\n');
    }
    files
}

// ---------------------------------------------------------------------------
// Illuminance
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct IlluminanceSummary {
    pub basis: IntensityBasis,
    pub map: IlluminanceMap,
}

impl IlluminanceSummary {
    pub fn meets_requirement(&self) -> bool {
        self.map.min() >= REQUIRED_LUX
    }
}

/// Floor illuminance under both readings of the luminous-intensity figure;
/// the configured one first.
pub fn illuminance_summaries(cfg: &RunConfig) -> Result<Vec<IlluminanceSummary>> {
    let configured = cfg.scene.units.intensity_basis;
    let other = match configured {
        IntensityBasis::Ld => IntensityBasis::Unit,
        IntensityBasis::Unit => IntensityBasis::Ld,
    };
    [configured, other]
        .into_iter()
        .map(|basis| {
            let mut sc = cfg.scene.clone();
            sc.units.intensity_basis = basis;
            let scene = Scene::build(&sc)?;
            Ok(IlluminanceSummary {
                basis,
                map: illuminance_map(&scene, 0.0, cfg.illuminance_step),
            })
        })
        .collect()
}

pub fn basis_name(b: IntensityBasis) -> &'static str {
    match b {
        IntensityBasis::Ld => "ld",
        IntensityBasis::Unit => "unit",
    }
}

pub fn illuminance_csv(map: &IlluminanceMap) -> String {
    let mut s = format!("{SCHEMA_LINE}\nx_m,y_m,lux\n");
    for (ix, x) in map.xs.iter().enumerate() {
        for (iy, y) in map.ys.iter().enumerate() {
            let _ = writeln!(s, "{x:.3},{y:.3},{:.4}", map.at(ix, iy));
        }
    }
    s
}

pub fn illuminance_report(summaries: &[IlluminanceSummary]) -> String {
    let mut s = format!("{SCHEMA_LINE}\n");
    for (i, sm) in summaries.iter().enumerate() {
        let role = if i == 0 { "configured" } else { "alternative" };
        let b = basis_name(sm.basis);
        let _ = writeln!(s, "{role}.basis = {b}");
        let _ = writeln!(s, "{role}.min_lux = {:.3}", sm.map.min());
        let _ = writeln!(s, "{role}.mean_lux = {:.3}", sm.map.mean());
        let _ = writeln!(s, "{role}.max_lux = {:.3}", sm.map.max());
        let verdict = if sm.meets_requirement() { "pass" } else { "shortfall" };
        let _ = writeln!(s, "{role}.min_300_lx = {verdict}");
        if !sm.meets_requirement() {
            let _ = writeln!(s, "{role}.shortfall_lux = {:.3}", REQUIRED_LUX - sm.map.min());
        }
    }
    s
}
