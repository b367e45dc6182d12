use proptest::prelude::*;

use vlc_wdm::allocation::{
    allocate, compute_cci, compute_cnr_table, green_interference, Assignment, CnrEntry, CnrTable, UserTerminal,
};
use vlc_wdm::channel::{ChannelConfig, ChannelModel};
use vlc_wdm::scene::{Color, ReceiverKind, Scene, SceneConfig, UserLayout};

const UNITS: usize = 12;

fn kind() -> impl Strategy<Value = ReceiverKind> {
    prop_oneof![Just(ReceiverKind::NonImaging), Just(ReceiverKind::AngleDiversity)]
}

/// Rows of (power, los) per unit, with the stationary flag.
fn table() -> impl Strategy<Value = CnrTable> {
    let row = prop::collection::vec((0.0..1e-6f64, any::<bool>()), UNITS);
    prop::collection::vec((row, any::<bool>()), 1..=4).prop_map(|rows| {
        let sigma_t = 1e-8;
        CnrTable {
            users: (1..=rows.len()).collect(),
            stationary: rows.iter().map(|r| r.1).collect(),
            sigma_t,
            entries: rows
                .iter()
                .map(|(r, _)| {
                    r.iter()
                        .map(|&(p, los)| CnrEntry {
                            power: p,
                            cnr: (0.3 * p).powi(2) / (2.0 * sigma_t * sigma_t),
                            face: 0,
                            los,
                        })
                        .collect()
                })
                .collect(),
        }
    })
}

fn served(map: &vlc_wdm::allocation::AllocationMap) -> Vec<usize> {
    map.assignments.iter().filter_map(Assignment::unit).collect()
}

proptest! {
    #[test]
    fn no_unit_serves_two_users(t in table(), k in kind()) {
        let map = allocate(&t, k).unwrap();
        let mut units = served(&map);
        let n = units.len();
        units.sort_unstable();
        units.dedup();
        prop_assert_eq!(units.len(), n);
        prop_assert_eq!(map.active_units.len(), n);
    }

    #[test]
    fn cnr_rescaling_keeps_the_allocation(t in table(), k in kind(), s in 1e-3..1e3f64) {
        let mut scaled = t.clone();
        for row in &mut scaled.entries {
            for e in row.iter_mut() {
                e.cnr *= s;
            }
        }
        prop_assert_eq!(allocate(&t, k).unwrap(), allocate(&scaled, k).unwrap());
    }

    #[test]
    fn mobile_rows_never_move_stationary_users(t in table(), k in kind(), seed in prop::collection::vec(0.0..1e-6f64, UNITS)) {
        let mut moved = t.clone();
        for (row, stationary) in moved.entries.iter_mut().zip(&t.stationary) {
            if !stationary {
                for (e, &p) in row.iter_mut().zip(&seed) {
                    e.cnr = (0.3 * p).powi(2) / (2.0 * t.sigma_t * t.sigma_t);
                }
            }
        }
        let a = allocate(&t, k).unwrap();
        let b = allocate(&moved, k).unwrap();
        for i in 0..t.users.len() {
            if t.stationary[i] {
                prop_assert_eq!(a.assignments[i], b.assignments[i]);
            }
        }
    }

    #[test]
    fn stationary_users_are_handled_first(t in table(), k in kind()) {
        let map = allocate(&t, k).unwrap();
        let first_mobile = map.priority.iter().position(|&r| !t.stationary[r]).unwrap_or(map.priority.len());
        prop_assert!(map.priority[first_mobile..].iter().all(|&r| !t.stationary[r]));
    }

    #[test]
    fn dropping_an_interferer_lowers_interference(powers in prop::collection::vec(1e-9..1e-5f64, 1..11), drop in 0usize..10) {
        let drop = drop % powers.len();
        let mut fewer = powers.clone();
        fewer.remove(drop);
        prop_assert!(green_interference(0.3, &fewer) < green_interference(0.3, &powers));
    }
}

#[test]
fn cci_sums_the_other_active_units() {
    let mut cfg = SceneConfig::default();
    cfg.room.element_size_first = 0.5;
    cfg.room.element_size_second = 1.0;
    let model = ChannelModel::new(Scene::build(&cfg).unwrap(), ChannelConfig::default()).unwrap();
    let layout = UserLayout::scenario(1).unwrap();
    for kind in ReceiverKind::ALL {
        let mut terminals: Vec<UserTerminal> = layout
            .stationary_users
            .iter()
            .map(|&(user, p)| UserTerminal {
                user,
                stationary: true,
                receiver: model.scene().receiver(kind, p).unwrap(),
            })
            .collect();
        terminals.push(UserTerminal {
            user: layout.mobile_user.0,
            stationary: false,
            receiver: model.scene().receiver(kind, layout.mobile_user.1[5]).unwrap(),
        });
        let table = compute_cnr_table(&model, &terminals, 1e-8);
        let map = allocate(&table, kind).unwrap();
        let cci = compute_cci(&model, &terminals, &map);
        for (t, (a, c)) in terminals.iter().zip(map.assignments.iter().zip(&cci.users)) {
            let Assignment::Served { unit, face } = *a else {
                assert!(c.is_none());
                continue;
            };
            let c = c.as_ref().unwrap();
            assert_eq!(c.serving_face, face);
            let mut want = 0.0;
            for &k in map.active_units.iter().filter(|&&k| k != unit) {
                let p = model.receive_power(k, &t.receiver, Color::Green)[face];
                want += (0.3 * p / 2.0f64).powi(2);
            }
            assert!((c.green() - want).abs() <= 1e-12 * want.max(1e-300), "{} vs {want}", c.green());
        }
    }
}
