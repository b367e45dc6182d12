use proptest::prelude::*;

use vlc_wdm::channel::los_gain;
use vlc_wdm::scene::{illuminance_map, point_illuminance, Color, ReceiverKind, Room, Scene, SceneConfig, Surface};
use vlc_wdm::Vec3;

fn reference_room(first: f64, second: f64) -> Room {
    let mut cfg = SceneConfig::default();
    cfg.room.element_size_first = first;
    cfg.room.element_size_second = second;
    Scene::build(&cfg).unwrap().room
}

proptest! {
    #[test]
    fn elements_cover_every_surface(size in 0.07..1.3f64) {
        let room = reference_room(size, size);
        for s in Surface::ALL {
            let area: f64 = room.discretize_surface(s, size).iter().map(|e| e.area).sum();
            prop_assert!((area - room.surface_area(s)).abs() <= 1e-9 * room.surface_area(s));
        }
    }

    #[test]
    fn wider_field_of_view_never_loses_light(
        x in 0.0..4.0f64, y in 0.0..8.0f64, z in 0.0..2.5f64, fov in 1.0..89.0f64, extra in 0.0..30.0f64,
    ) {
        let scene = Scene::build(&SceneConfig::default()).unwrap();
        let rx = scene.receiver(ReceiverKind::NonImaging, Vec3::new(x, y, z)).unwrap();
        let mut narrow = rx.photodetector(0, Color::Green);
        narrow.fov_deg = fov;
        let mut wide = narrow;
        wide.fov_deg = (fov + extra).min(90.0);
        for u in &scene.units {
            for &ld in &u.emitters {
                let a = los_gain(ld, Vec3::new(0.0, 0.0, -1.0), u.lambertian_order, &narrow);
                let b = los_gain(ld, Vec3::new(0.0, 0.0, -1.0), u.lambertian_order, &wide);
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn illuminance_is_mirror_symmetric(x in 0.0..4.0f64, y in 0.0..8.0f64) {
        let scene = Scene::build(&SceneConfig::default()).unwrap();
        let a = point_illuminance(&scene.units, Vec3::new(x, y, 0.0));
        let b = point_illuminance(&scene.units, Vec3::new(x, 8.0 - y, 0.0));
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }
}

#[test]
fn receiver_faces_are_unit_vectors() {
    let scene = Scene::build(&SceneConfig::default()).unwrap();
    for kind in ReceiverKind::ALL {
        let rx = scene.receiver(kind, Vec3::new(2.0, 4.0, 1.0)).unwrap();
        for f in &rx.faces {
            assert!((f.normal.norm() - 1.0).abs() < 1e-12);
            assert!(f.normal.z > 0.0);
        }
    }
    let adr = scene.receiver(ReceiverKind::AngleDiversity, Vec3::new(2.0, 4.0, 1.0)).unwrap();
    assert_eq!(adr.face_count(), 7);
}

#[test]
fn reference_element_counts_follow_from_area() {
    let scene = Scene::build(&SceneConfig::default()).unwrap();
    assert_eq!(scene.fine_elements.len(), 54_400);
    assert_eq!(scene.coarse_elements.len(), 3_400);
}

#[test]
fn points_outside_the_room_are_rejected() {
    let scene = Scene::build(&SceneConfig::default()).unwrap();
    assert!(scene.receiver(ReceiverKind::NonImaging, Vec3::new(4.5, 1.0, 1.0)).is_err());
    let mut cfg = SceneConfig::default();
    cfg.units.positions.push(Vec3::new(1.0, 9.0, 3.0));
    assert!(Scene::build(&cfg).is_err());
}

#[test]
fn illuminance_under_a_unit_matches_inverse_square() {
    let scene = Scene::build(&SceneConfig::default()).unwrap();
    let u = scene.unit(5);
    let mut want = 0.0;
    for ld in &u.emitters {
        let p = Vec3::new(u.center.x, u.center.y, 0.0);
        let v = p - *ld;
        let d = v.norm();
        let c = -v.z / d;
        want += u.ld_intensity_cd * c.powf(u.lambertian_order) * c / (d * d);
    }
    let got = point_illuminance(std::slice::from_ref(u), Vec3::new(u.center.x, u.center.y, 0.0));
    assert!((got - want).abs() <= 1e-12 * want);
    // Six 162 cd emitters three metres above: close to 6 * 162 / 9.
    assert!((got - 108.0).abs() < 0.1, "{got}");
}

#[test]
fn map_grid_matches_step() {
    let scene = Scene::build(&SceneConfig::default()).unwrap();
    let m = illuminance_map(&scene, 0.0, 0.5);
    assert_eq!((m.xs.len(), m.ys.len()), (8, 16));
    assert_eq!(m.lux.len(), 128);
    assert!(m.min() > 0.0 && m.min() <= m.mean() && m.mean() <= m.max());
}
