//! Static world description: the rectangular room and its reflecting
//! surfaces, the RYGB laser-diode light units on the ceiling, and the two
//! receiver designs (single up-facing array and seven-face angle-diversity
//! array).
//!
//! Everything here is immutable once [`Scene::build`] returns; the channel
//! tracer and the pipelines share a scene freely across threads.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Reflecting surfaces re-emit with a first-order Lambertian pattern.
pub const REFLECTION_LAMBERTIAN_ORDER: f64 = 1.0;

/// Height of the communication floor where user receivers sit.
pub const COMMUNICATION_FLOOR: f64 = 1.0;

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Yellow,
    Green,
    Blue,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Yellow, Color::Green, Color::Blue];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Blue => "blue",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per WDM color.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerColor<T> {
    pub red: T,
    pub yellow: T,
    pub green: T,
    pub blue: T,
}

impl<T> PerColor<T> {
    pub fn from_fn(mut f: impl FnMut(Color) -> T) -> Self {
        PerColor {
            red: f(Color::Red),
            yellow: f(Color::Yellow),
            green: f(Color::Green),
            blue: f(Color::Blue),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Color, &T)> {
        Color::ALL.into_iter().map(move |c| (c, &self[c]))
    }
}

impl<T> Index<Color> for PerColor<T> {
    type Output = T;
    fn index(&self, c: Color) -> &T {
        match c {
            Color::Red => &self.red,
            Color::Yellow => &self.yellow,
            Color::Green => &self.green,
            Color::Blue => &self.blue,
        }
    }
}

impl<T> IndexMut<Color> for PerColor<T> {
    fn index_mut(&mut self, c: Color) -> &mut T {
        match c {
            Color::Red => &mut self.red,
            Color::Yellow => &mut self.yellow,
            Color::Green => &mut self.green,
            Color::Blue => &mut self.blue,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration (scenario file schema; every default is the reference setup)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reflectances {
    pub floor: f64,
    pub ceiling: f64,
    /// Wall in the plane y = 0.
    pub wall_y0: f64,
    /// Wall in the plane y = length.
    pub wall_y_far: f64,
    /// Wall in the plane x = 0.
    pub wall_x0: f64,
    /// Wall in the plane x = width.
    pub wall_x_far: f64,
}

impl Default for Reflectances {
    fn default() -> Self {
        Reflectances {
            floor: 0.3,
            ceiling: 0.8,
            wall_y0: 0.8,
            wall_y_far: 0.8,
            wall_x0: 0.8,
            wall_x_far: 0.8,
        }
    }
}

impl Reflectances {
    pub fn uniform(rho: f64) -> Self {
        Reflectances {
            floor: rho,
            ceiling: rho,
            wall_y0: rho,
            wall_y_far: rho,
            wall_x0: rho,
            wall_x_far: rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub reflectance: Reflectances,
    /// Edge of the square elements used for first-order reflections.
    pub element_size_first: f64,
    /// Edge of the square elements used for the second reflection.
    pub element_size_second: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            width: 4.0,
            length: 8.0,
            height: 3.0,
            reflectance: Reflectances::default(),
            element_size_first: 0.05,
            element_size_second: 0.20,
        }
    }
}

/// How the configured center luminous intensity is split across a unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityBasis {
    /// The value applies to every laser diode.
    Ld,
    /// The value applies to the whole six-LD unit.
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitConfig {
    pub positions: Vec<Vec3>,
    /// LD columns along x.
    pub ld_columns: usize,
    /// LD rows along y.
    pub ld_rows: usize,
    pub ld_pitch: f64,
    /// Optical transmit power of one LD per color, watts.
    pub power: PerColor<f64>,
    pub lambertian_order: f64,
    pub luminous_intensity_cd: f64,
    pub intensity_basis: IntensityBasis,
}

impl Default for UnitConfig {
    fn default() -> Self {
        let mut positions = Vec::with_capacity(12);
        for x in [1.0, 2.0, 3.0] {
            for y in [1.0, 3.0, 5.0, 7.0] {
                positions.push(Vec3::new(x, y, 3.0));
            }
        }
        UnitConfig {
            positions,
            ld_columns: 2,
            ld_rows: 3,
            ld_pitch: 0.02,
            power: PerColor {
                red: 0.8,
                yellow: 0.5,
                green: 0.3,
                blue: 0.3,
            },
            lambertian_order: 0.65,
            luminous_intensity_cd: 162.0,
            intensity_basis: IntensityBasis::Ld,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceOrientation {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    /// Half-angle field of view of every photodetector, degrees.
    pub fov_deg: f64,
    /// Area of one photodetector, m².
    pub pd_area: f64,
    /// Electrical bandwidth of the receiver, Hz.
    pub bandwidth: f64,
    pub faces: Vec<FaceOrientation>,
}

impl ReceiverSpec {
    pub fn non_imaging() -> Self {
        ReceiverSpec {
            fov_deg: 40.0,
            pd_area: 6.25e-6,
            bandwidth: 0.5e9,
            faces: vec![FaceOrientation {
                elevation_deg: 90.0,
                azimuth_deg: 0.0,
            }],
        }
    }

    pub fn angle_diversity() -> Self {
        let mut faces = vec![FaceOrientation {
            elevation_deg: 90.0,
            azimuth_deg: 0.0,
        }];
        for az in [0.0, 60.0, 120.0, 180.0, 240.0, 300.0] {
            faces.push(FaceOrientation {
                elevation_deg: 50.0,
                azimuth_deg: az,
            });
        }
        ReceiverSpec {
            fov_deg: 20.0,
            pd_area: 4e-6,
            bandwidth: 0.75e9,
            faces,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiversConfig {
    /// Photodetector responsivity per color, A/W. Shared by both designs.
    pub responsivity: PerColor<f64>,
    pub nir: ReceiverSpec,
    pub niadr: ReceiverSpec,
}

impl Default for ReceiversConfig {
    fn default() -> Self {
        ReceiversConfig {
            responsivity: PerColor {
                red: 0.4,
                yellow: 0.35,
                green: 0.3,
                blue: 0.2,
            },
            nir: ReceiverSpec::non_imaging(),
            niadr: ReceiverSpec::angle_diversity(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub room: RoomConfig,
    pub units: UnitConfig,
    pub receivers: ReceiversConfig,
}

// ---------------------------------------------------------------------------
// Built scene
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surface {
    Floor,
    Ceiling,
    WallY0,
    WallYFar,
    WallX0,
    WallXFar,
}

impl Surface {
    pub const ALL: [Surface; 6] = [
        Surface::Floor,
        Surface::Ceiling,
        Surface::WallY0,
        Surface::WallYFar,
        Surface::WallX0,
        Surface::WallXFar,
    ];

    /// Inward-pointing unit normal.
    pub fn normal(self) -> Vec3 {
        match self {
            Surface::Floor => Vec3::UP,
            Surface::Ceiling => Vec3::DOWN,
            Surface::WallY0 => Vec3::new(0.0, 1.0, 0.0),
            Surface::WallYFar => Vec3::new(0.0, -1.0, 0.0),
            Surface::WallX0 => Vec3::new(1.0, 0.0, 0.0),
            Surface::WallXFar => Vec3::new(-1.0, 0.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Room {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub reflectance: Reflectances,
    pub element_size_first: f64,
    pub element_size_second: f64,
}

impl Room {
    pub fn reflectance(&self, s: Surface) -> f64 {
        let r = &self.reflectance;
        match s {
            Surface::Floor => r.floor,
            Surface::Ceiling => r.ceiling,
            Surface::WallY0 => r.wall_y0,
            Surface::WallYFar => r.wall_y_far,
            Surface::WallX0 => r.wall_x0,
            Surface::WallXFar => r.wall_x_far,
        }
    }

    pub fn surface_area(&self, s: Surface) -> f64 {
        let (w, l, h) = (self.width, self.length, self.height);
        match s {
            Surface::Floor | Surface::Ceiling => w * l,
            Surface::WallY0 | Surface::WallYFar => w * h,
            Surface::WallX0 | Surface::WallXFar => l * h,
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (-EPS..=self.width + EPS).contains(&p.x)
            && (-EPS..=self.length + EPS).contains(&p.y)
            && (-EPS..=self.height + EPS).contains(&p.z)
    }

    /// Splits one surface into square elements of edge `size`; the last
    /// row and column are clipped when `size` does not tile the extent.
    pub fn discretize_surface(&self, s: Surface, size: f64) -> Vec<SurfaceElement> {
        let (w, l, h) = (self.width, self.length, self.height);
        let rho = self.reflectance(s);
        let normal = s.normal();
        // (extent u, extent v, point builder)
        let (eu, ev): (f64, f64) = match s {
            Surface::Floor | Surface::Ceiling => (w, l),
            Surface::WallY0 | Surface::WallYFar => (w, h),
            Surface::WallX0 | Surface::WallXFar => (l, h),
        };
        let place = |u: f64, v: f64| match s {
            Surface::Floor => Vec3::new(u, v, 0.0),
            Surface::Ceiling => Vec3::new(u, v, h),
            Surface::WallY0 => Vec3::new(u, 0.0, v),
            Surface::WallYFar => Vec3::new(u, l, v),
            Surface::WallX0 => Vec3::new(0.0, u, v),
            Surface::WallXFar => Vec3::new(w, u, v),
        };
        let cells_u = grid_cells(eu, size);
        let cells_v = grid_cells(ev, size);
        let mut out = Vec::with_capacity(cells_u.len() * cells_v.len());
        for &(cu, du) in &cells_u {
            for &(cv, dv) in &cells_v {
                out.push(SurfaceElement {
                    center: place(cu, cv),
                    normal,
                    area: du * dv,
                    reflectance: rho,
                    surface: s,
                });
            }
        }
        out
    }

    pub fn discretize(&self, size: f64) -> Vec<SurfaceElement> {
        Surface::ALL
            .iter()
            .flat_map(|&s| self.discretize_surface(s, size))
            .collect()
    }
}

/// Cell centers and widths covering `[0, extent]` with step `size`.
fn grid_cells(extent: f64, size: f64) -> Vec<(f64, f64)> {
    let n = ((extent / size) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let lo = i as f64 * size;
            let hi = ((i + 1) as f64 * size).min(extent);
            (0.5 * (lo + hi), hi - lo)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceElement {
    pub center: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub reflectance: f64,
    pub surface: Surface,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightUnit {
    /// 1-based; also selects the unit's SCM tone.
    pub id: usize,
    pub center: Vec3,
    /// Absolute LD positions.
    pub emitters: Vec<Vec3>,
    pub power: PerColor<f64>,
    pub lambertian_order: f64,
    /// Center luminous intensity of each LD, candela.
    pub ld_intensity_cd: f64,
}

impl LightUnit {
    /// All emitters point straight down.
    pub const NORMAL: Vec3 = Vec3::DOWN;

    pub fn mirrored_id(&self, scene: &Scene) -> Option<usize> {
        let target = self.center.mirror_y(scene.room.length);
        scene
            .units
            .iter()
            .find(|u| u.center.distance(target) < 1e-9)
            .map(|u| u.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Photodetector {
    pub position: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub fov_deg: f64,
    pub color: Color,
    pub responsivity: f64,
}

impl Photodetector {
    #[inline]
    pub fn cos_fov(&self) -> f64 {
        self.fov_deg.to_radians().cos()
    }
}

/// True iff `source` lies within the detector's half-angle field of view.
pub fn fov_accepts(pd: &Photodetector, source: Vec3) -> bool {
    let to_src = source - pd.position;
    let d = to_src.norm();
    if d == 0.0 {
        return false;
    }
    to_src.dot(pd.normal) / d >= pd.cos_fov() - 1e-12
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReceiverKind {
    #[serde(rename = "nir")]
    NonImaging,
    #[serde(rename = "niadr")]
    AngleDiversity,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 2] = [ReceiverKind::NonImaging, ReceiverKind::AngleDiversity];

    pub fn label(self) -> &'static str {
        match self {
            ReceiverKind::NonImaging => "NI-R",
            ReceiverKind::AngleDiversity => "NI-ADR",
        }
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub orientation: FaceOrientation,
    pub normal: Vec3,
}

/// A user terminal: one or more faces, each a 2×2 array of color-filtered
/// photodetectors that share the face's position and orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct Receiver {
    pub kind: ReceiverKind,
    pub position: Vec3,
    pub faces: Vec<Face>,
    pub fov_deg: f64,
    pub pd_area: f64,
    pub bandwidth: f64,
    pub responsivity: PerColor<f64>,
}

impl Receiver {
    pub fn photodetector(&self, face: usize, color: Color) -> Photodetector {
        Photodetector {
            position: self.position,
            normal: self.faces[face].normal,
            area: self.pd_area,
            fov_deg: self.fov_deg,
            color,
            responsivity: self.responsivity[color],
        }
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

/// Users of one scenario: stationary users first (they take priority),
/// then the mobile user and the positions it visits.
#[derive(Clone, Debug, PartialEq)]
pub struct UserLayout {
    pub scenario_id: u8,
    pub stationary_users: Vec<(usize, Vec3)>,
    pub mobile_user: (usize, Vec<Vec3>),
}

/// Mobile sweep: y = 0.5, 1.5, …, 7.5 m at each lane x.
pub fn mobile_sweep(lanes: &[f64], length: f64) -> Vec<Vec3> {
    let steps = (length - 0.5).floor() as usize + 1;
    let mut out = Vec::new();
    for &x in lanes {
        for i in 0..steps {
            out.push(Vec3::new(x, 0.5 + i as f64, COMMUNICATION_FLOOR));
        }
    }
    out
}

pub const MOBILE_LANES: [f64; 2] = [0.5, 1.5];

impl UserLayout {
    /// The four reference scenarios: two stationary users and one mobile
    /// user sweeping both lanes.
    pub fn scenario(id: u8) -> Result<Self> {
        let p = |x: f64, y: f64| Vec3::new(x, y, COMMUNICATION_FLOOR);
        let (a, b) = match id {
            1 => (p(1.0, 1.0), p(1.0, 7.0)),
            2 => (p(1.0, 4.0), p(3.0, 4.0)),
            3 => (p(2.0, 1.0), p(2.0, 7.0)),
            4 => (p(1.0, 1.0), p(2.0, 4.0)),
            _ => return Err(Error::InvalidConfig(format!("no scenario {id}"))),
        };
        Ok(UserLayout {
            scenario_id: id,
            stationary_users: vec![(1, a), (2, b)],
            mobile_user: (3, mobile_sweep(&MOBILE_LANES, 8.0)),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub room: Room,
    /// Elements for the first reflection.
    pub fine_elements: Vec<SurfaceElement>,
    /// Elements for the second reflection.
    pub coarse_elements: Vec<SurfaceElement>,
    pub units: Vec<LightUnit>,
}

impl Scene {
    pub fn build(config: &SceneConfig) -> Result<Scene> {
        validate(config)?;
        let rc = &config.room;
        let room = Room {
            width: rc.width,
            length: rc.length,
            height: rc.height,
            reflectance: rc.reflectance.clone(),
            element_size_first: rc.element_size_first,
            element_size_second: rc.element_size_second,
        };
        let uc = &config.units;
        let per_ld = match uc.intensity_basis {
            IntensityBasis::Ld => uc.luminous_intensity_cd,
            IntensityBasis::Unit => uc.luminous_intensity_cd / (uc.ld_columns * uc.ld_rows) as f64,
        };
        let units = uc
            .positions
            .iter()
            .enumerate()
            .map(|(i, &center)| {
                let mut emitters = Vec::with_capacity(uc.ld_columns * uc.ld_rows);
                let off = |k: usize, n: usize| (k as f64 - (n as f64 - 1.0) / 2.0) * uc.ld_pitch;
                for cx in 0..uc.ld_columns {
                    for ry in 0..uc.ld_rows {
                        emitters.push(center + Vec3::new(off(cx, uc.ld_columns), off(ry, uc.ld_rows), 0.0));
                    }
                }
                LightUnit {
                    id: i + 1,
                    center,
                    emitters,
                    power: uc.power,
                    lambertian_order: uc.lambertian_order,
                    ld_intensity_cd: per_ld,
                }
            })
            .collect();
        Ok(Scene {
            config: config.clone(),
            fine_elements: room.discretize(rc.element_size_first),
            coarse_elements: room.discretize(rc.element_size_second),
            room,
            units,
        })
    }

    pub fn unit(&self, id: usize) -> &LightUnit {
        &self.units[id - 1]
    }

    pub fn receiver_spec(&self, kind: ReceiverKind) -> &ReceiverSpec {
        match kind {
            ReceiverKind::NonImaging => &self.config.receivers.nir,
            ReceiverKind::AngleDiversity => &self.config.receivers.niadr,
        }
    }

    pub fn receiver(&self, kind: ReceiverKind, position: Vec3) -> Result<Receiver> {
        if !self.room.contains(position) {
            return Err(Error::OutsideRoom {
                x: position.x,
                y: position.y,
                z: position.z,
            });
        }
        let spec = self.receiver_spec(kind);
        Ok(Receiver {
            kind,
            position,
            faces: spec
                .faces
                .iter()
                .map(|&o| Face {
                    orientation: o,
                    normal: Vec3::from_elevation_azimuth(o.elevation_deg, o.azimuth_deg),
                })
                .collect(),
            fov_deg: spec.fov_deg,
            pd_area: spec.pd_area,
            bandwidth: spec.bandwidth,
            responsivity: self.config.receivers.responsivity,
        })
    }
}

fn validate(c: &SceneConfig) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidConfig(m));
    let r = &c.room;
    for (name, v) in [("width", r.width), ("length", r.length), ("height", r.height)] {
        if !(v > 0.0 && v.is_finite()) {
            return bad(format!("room {name} must be positive, got {v}"));
        }
    }
    for (name, v) in [
        ("element_size_first", r.element_size_first),
        ("element_size_second", r.element_size_second),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    let rf = &r.reflectance;
    for (name, v) in [
        ("floor", rf.floor),
        ("ceiling", rf.ceiling),
        ("wall_y0", rf.wall_y0),
        ("wall_y_far", rf.wall_y_far),
        ("wall_x0", rf.wall_x0),
        ("wall_x_far", rf.wall_x_far),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return bad(format!("{name} reflectance {v} outside [0, 1]"));
        }
    }
    let u = &c.units;
    if u.ld_columns == 0 || u.ld_rows == 0 {
        return bad("a light unit needs at least one LD".into());
    }
    if u.ld_pitch < 0.0 || u.lambertian_order < 0.0 || u.luminous_intensity_cd < 0.0 {
        return bad("LD pitch, Lambertian order and intensity must be non-negative".into());
    }
    for (color, &p) in u.power.iter() {
        if !(p > 0.0) {
            return bad(format!("{color} transmit power must be positive, got {p}"));
        }
    }
    for p in &u.positions {
        let inside = (0.0..=r.width).contains(&p.x) && (0.0..=r.length).contains(&p.y) && (0.0..=r.height).contains(&p.z);
        if !inside {
            return Err(Error::OutsideRoom { x: p.x, y: p.y, z: p.z });
        }
    }
    for (color, &resp) in c.receivers.responsivity.iter() {
        if !(resp > 0.0) {
            return bad(format!("{color} responsivity must be positive, got {resp}"));
        }
    }
    for (name, s) in [("nir", &c.receivers.nir), ("niadr", &c.receivers.niadr)] {
        if !(s.fov_deg > 0.0 && s.fov_deg <= 90.0) {
            return bad(format!("{name} FOV {} outside (0, 90]", s.fov_deg));
        }
        if !(s.pd_area > 0.0) || !(s.bandwidth > 0.0) || s.faces.is_empty() {
            return bad(format!("{name} needs positive area, bandwidth and at least one face"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Illuminance
// ---------------------------------------------------------------------------

/// Horizontal illuminance on a plane, sampled at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminanceMap {
    pub plane_height: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `lux[ix * ys.len() + iy]`.
    pub lux: Vec<f64>,
}

impl IlluminanceMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.lux[ix * self.ys.len() + iy]
    }

    pub fn min(&self) -> f64 {
        self.lux.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.lux.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.lux.iter().sum::<f64>() / self.lux.len() as f64
    }
}

/// Direct-light illuminance at `point` on a horizontal plane.
pub fn point_illuminance<'a>(units: impl IntoIterator<Item = &'a LightUnit>, point: Vec3) -> f64 {
    let mut e = 0.0;
    for u in units {
        for &ld in &u.emitters {
            let v = point - ld;
            let d2 = v.norm_squared();
            let d = d2.sqrt();
            let cos_emit = v.dot(LightUnit::NORMAL) / d;
            let cos_inc = -v.z / d;
            if cos_emit <= 0.0 || cos_inc <= 0.0 {
                continue;
            }
            e += u.ld_intensity_cd * cos_emit.powf(u.lambertian_order) * cos_inc / d2;
        }
    }
    e
}

pub fn illuminance_map(scene: &Scene, plane_height: f64, grid_step: f64) -> IlluminanceMap {
    illuminance_map_for(scene, &scene.units, plane_height, grid_step)
}

/// As [`illuminance_map`] with only `units` switched on.
pub fn illuminance_map_for(
    scene: &Scene,
    units: &[LightUnit],
    plane_height: f64,
    grid_step: f64,
) -> IlluminanceMap {
    let xs: Vec<f64> = grid_cells(scene.room.width, grid_step).into_iter().map(|c| c.0).collect();
    let ys: Vec<f64> = grid_cells(scene.room.length, grid_step).into_iter().map(|c| c.0).collect();
    let mut lux = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            lux.push(point_illuminance(units, Vec3::new(x, y, plane_height)));
        }
    }
    IlluminanceMap {
        plane_height,
        xs,
        ys,
        lux,
    }
}
