//! Controller side of the tone protocol: per-user CNR tables built from the
//! received green tone powers, greedy light-unit assignment with stationary
//! users served first, and co-channel interference from the active units.

use std::fmt;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::scene::{Color, PerColor, Receiver, ReceiverKind};

/// A user terminal as the controller sees it.
#[derive(Clone, Debug)]
pub struct UserTerminal {
    pub user: usize,
    pub stationary: bool,
    pub receiver: Receiver,
}

/// CNR of a tone carried at `power` watts on the green channel.
pub fn cnr(responsivity_green: f64, power: f64, sigma_t: f64) -> f64 {
    (responsivity_green * power).powi(2) / (2.0 * sigma_t * sigma_t)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CnrEntry {
    /// Green power on the best face for this unit, W.
    pub power: f64,
    pub cnr: f64,
    /// Face achieving `power` (always 0 for the single-face receiver).
    pub face: usize,
    /// Whether any LD of the unit reaches any face directly.
    pub los: bool,
}

/// Rows are users (in the order given), columns are units 1..=M.
#[derive(Clone, Debug)]
pub struct CnrTable {
    pub users: Vec<usize>,
    pub stationary: Vec<bool>,
    pub sigma_t: f64,
    pub entries: Vec<Vec<CnrEntry>>,
}

impl CnrTable {
    pub fn units(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn entry(&self, row: usize, unit_id: usize) -> &CnrEntry {
        &self.entries[row][unit_id - 1]
    }

    /// Unit ids in descending CNR order; equal CNRs go to the lower id.
    pub fn ranking(&self, row: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (1..=self.units()).collect();
        ids.sort_by(|&a, &b| {
            let (ca, cb) = (self.entry(row, a).cnr, self.entry(row, b).cnr);
            cb.total_cmp(&ca).then(a.cmp(&b))
        });
        ids
    }
}

pub fn compute_cnr_table(model: &ChannelModel, terminals: &[UserTerminal], sigma_t: f64) -> CnrTable {
    let scene = model.scene();
    let entries = terminals
        .iter()
        .map(|t| {
            let r_g = t.receiver.responsivity[Color::Green];
            scene
                .units
                .iter()
                .map(|u| {
                    let powers = model.receive_power(u.id, &t.receiver, Color::Green);
                    let (face, power) = best_face(&powers);
                    let los = (0..t.receiver.face_count())
                        .any(|f| model.los_visible(u.id, &t.receiver.photodetector(f, Color::Green)));
                    CnrEntry {
                        power,
                        cnr: cnr(r_g, power, sigma_t),
                        face,
                        los,
                    }
                })
                .collect()
        })
        .collect();
    CnrTable {
        users: terminals.iter().map(|t| t.user).collect(),
        stationary: terminals.iter().map(|t| t.stationary).collect(),
        sigma_t,
        entries,
    }
}

/// Index and value of the maximum; the first face wins ties.
pub fn best_face(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Served { unit: usize, face: usize },
    Unserved,
}

impl Assignment {
    pub fn unit(&self) -> Option<usize> {
        match self {
            Assignment::Served { unit, .. } => Some(*unit),
            Assignment::Unserved => None,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Served { unit, face } => write!(f, "unit {unit} face {}", face + 1),
            Assignment::Unserved => f.write_str("unserved"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationMap {
    pub users: Vec<usize>,
    /// Same order as `users`.
    pub assignments: Vec<Assignment>,
    /// Assigned units in the order they were handed out.
    pub active_units: Vec<usize>,
    /// Rows of the CNR table in the order they were processed.
    pub priority: Vec<usize>,
}

impl AllocationMap {
    pub fn assignment_of(&self, user: usize) -> Option<Assignment> {
        self.users.iter().position(|&u| u == user).map(|i| self.assignments[i])
    }
}

/// Greedy assignment in priority order (stationary users first).
///
/// Each user takes its highest-CNR unit that is still free. When that unit
/// is taken, a mobile single-face receiver is left unserved if a stationary
/// user holds it; otherwise the user falls back to its next-best free unit,
/// which for the single-face receiver must still be in direct view.
pub fn allocate(table: &CnrTable, kind: ReceiverKind) -> Result<AllocationMap> {
    let n_users = table.users.len();
    if n_users > table.units() {
        return Err(Error::TooManyUsers {
            users: n_users,
            units: table.units(),
        });
    }
    let mut priority: Vec<usize> = (0..n_users).filter(|&i| table.stationary[i]).collect();
    priority.extend((0..n_users).filter(|&i| !table.stationary[i]));

    let mut owner: Vec<Option<usize>> = vec![None; table.units() + 1];
    let mut assignments = vec![Assignment::Unserved; n_users];
    let mut active_units = Vec::new();
    for &row in &priority {
        let ranking = table.ranking(row);
        let best = ranking[0];
        let chosen = if table.entry(row, best).cnr <= 0.0 {
            None
        } else if owner[best].is_none() {
            Some(best)
        } else {
            let held_by_stationary = owner[best].is_some_and(|o| table.stationary[o]);
            match kind {
                ReceiverKind::NonImaging if !table.stationary[row] && held_by_stationary => None,
                ReceiverKind::NonImaging => ranking
                    .iter()
                    .copied()
                    .find(|&u| owner[u].is_none() && table.entry(row, u).los),
                ReceiverKind::AngleDiversity => ranking
                    .iter()
                    .copied()
                    .find(|&u| owner[u].is_none() && table.entry(row, u).cnr > 0.0),
            }
        };
        if let Some(unit) = chosen {
            owner[unit] = Some(row);
            active_units.push(unit);
            assignments[row] = Assignment::Served {
                unit,
                face: table.entry(row, unit).face,
            };
        }
    }
    Ok(AllocationMap {
        users: table.users.clone(),
        assignments,
        active_units,
        priority,
    })
}

/// Interference seen by one served user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserCci {
    pub user: usize,
    pub serving_face: usize,
    /// Green-tone interference power on each face, A².
    pub face_green: Vec<f64>,
}

impl UserCci {
    pub fn green(&self) -> f64 {
        self.face_green[self.serving_face]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CciLevels {
    /// `None` for unserved users; same order as the allocation.
    pub users: Vec<Option<UserCci>>,
}

/// Scales green-tone interference to a data color using the responsivity
/// ratio squared and the transmit power ratio.
pub fn scale_cci(i_green: f64, color: Color, responsivity: &PerColor<f64>, tx_power: &PerColor<f64>) -> f64 {
    (responsivity[color] / responsivity[Color::Green]).powi(2) * (tx_power[color] / tx_power[Color::Green]) * i_green
}

/// Sum of squared tone amplitudes from the other active units.
pub fn green_interference(responsivity_green: f64, interferer_powers: &[f64]) -> f64 {
    interferer_powers
        .iter()
        .map(|&p| (responsivity_green * p / 2.0).powi(2))
        .sum()
}

pub fn compute_cci(model: &ChannelModel, terminals: &[UserTerminal], map: &AllocationMap) -> CciLevels {
    let users = terminals
        .iter()
        .zip(&map.assignments)
        .map(|(t, a)| {
            let Assignment::Served { unit, face } = *a else {
                return None;
            };
            let r_g = t.receiver.responsivity[Color::Green];
            let interferers: Vec<Vec<f64>> = map
                .active_units
                .iter()
                .filter(|&&k| k != unit)
                .map(|&k| model.receive_power(k, &t.receiver, Color::Green))
                .collect();
            let face_green = (0..t.receiver.face_count())
                .map(|f| {
                    let powers: Vec<f64> = interferers.iter().map(|p| p[f]).collect();
                    green_interference(r_g, &powers)
                })
                .collect();
            Some(UserCci {
                user: t.user,
                serving_face: face,
                face_green,
            })
        })
        .collect();
    CciLevels { users }
}
