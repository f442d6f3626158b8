//! World model: room, reflecting surfaces, racks, transmitters, receivers,
//! noise and simulation settings.
//!
//! Scenarios load from and save to a strict JSON document (unknown keys are
//! rejected, `schema_version` must be 1). Lengths are meters, angles
//! degrees, powers watts; field names carry the unit.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{aim_at, angle_between, Aabb, AimAngles, Vec3};
use crate::linkbudget::NoiseParams;
use crate::optics::{
    los_power, AngleDiversityTransmitter, ChannelParams, Environment, Surface, TransmitterBranch,
    WfovReceiver, DEFAULT_MAX_ELEMENTS,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot access scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("no {kind} named '{name}'")]
    UnknownEntity { kind: &'static str, name: String },
    #[error("{adt} has no branch {index}")]
    UnknownBranch { adt: String, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
}

impl Room {
    pub fn bounds(&self) -> Aabb {
        Aabb::new(Vec3::ZERO, Vec3::new(self.length_m, self.width_m, self.height_m))
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.length_m, self.width_m, self.height_m) * 0.5
    }

    /// Floor, ceiling and four walls, all facing inward.
    pub fn surfaces(&self, wall_rho: f64, ceiling_rho: f64, floor_rho: f64) -> Vec<Surface> {
        let (l, w, h) = (self.length_m, self.width_m, self.height_m);
        let x = Vec3::new(l, 0.0, 0.0);
        let y = Vec3::new(0.0, w, 0.0);
        let z = Vec3::new(0.0, 0.0, h);
        vec![
            Surface::new("floor", Vec3::ZERO, x, y, floor_rho),
            Surface::new("ceiling", z, y, x, ceiling_rho),
            Surface::new("wall_x_min", Vec3::ZERO, y, z, wall_rho),
            Surface::new("wall_x_max", x, z, y, wall_rho),
            Surface::new("wall_y_min", Vec3::ZERO, z, x, wall_rho),
            Surface::new("wall_y_max", y, x, z, wall_rho),
        ]
    }
}

/// A rack body. `base_m` is the center of its bottom face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rack {
    pub name: String,
    pub base_m: Vec3,
    pub dims_m: Vec3,
}

impl Rack {
    pub fn body(&self) -> Aabb {
        let half = Vec3::new(self.dims_m.x / 2.0, self.dims_m.y / 2.0, 0.0);
        Aabb::new(self.base_m - half, self.base_m + half + Vec3::new(0.0, 0.0, self.dims_m.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AimMode {
    /// Each branch points exactly at its receiver.
    Exact,
    /// Integer-rounded published angle tables.
    PaperAngles,
}

impl fmt::Display for AimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AimMode::Exact => "exact",
            AimMode::PaperAngles => "paper_angles",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub bin_width_s: f64,
    pub element_size_m: f64,
    pub max_reflections: u32,
    pub aim_mode: AimMode,
    #[serde(default = "default_max_elements")]
    pub max_elements: usize,
    #[serde(default)]
    pub los_shadowing: bool,
}

fn default_max_elements() -> usize {
    DEFAULT_MAX_ELEMENTS
}

impl Default for SimulationParams {
    fn default() -> Self {
        let c = ChannelParams::default();
        SimulationParams {
            bin_width_s: c.bin_width_s,
            element_size_m: c.element_size_m,
            max_reflections: c.max_reflections,
            aim_mode: AimMode::PaperAngles,
            max_elements: c.max_elements,
            los_shadowing: c.los_shadowing,
        }
    }
}

impl SimulationParams {
    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            max_reflections: self.max_reflections,
            bin_width_s: self.bin_width_s,
            element_size_m: self.element_size_m,
            max_elements: self.max_elements,
            los_shadowing: self.los_shadowing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub room: Room,
    pub surfaces: Vec<Surface>,
    pub racks: Vec<Rack>,
    pub adts: Vec<AngleDiversityTransmitter>,
    pub receivers: Vec<WfovReceiver>,
    pub noise: NoiseParams,
    pub sim: SimulationParams,
    #[serde(skip)]
    occluders: Vec<Aabb>,
}

// Published branch angles, one row per transmitter, in receiver order.
const PAPER_AZIMUTHS_DEG: [[f64; 4]; 3] = [
    [348.0, 27.0, 51.0, 63.0],
    [270.0, 270.0, 90.0, 90.0],
    [270.0, 270.0, 270.0, 90.0],
];
const PAPER_ELEVATIONS_DEG: [[f64; 4]; 3] = [
    [20.0, 18.0, 13.0, 9.0],
    [18.0, 45.0, 45.0, 18.0],
    [10.0, 15.0, 30.0, 73.0],
];

pub const DEFAULT_WALL_REFLECTIVITY: f64 = 0.8;
pub const DEFAULT_CEILING_REFLECTIVITY: f64 = 0.8;
pub const DEFAULT_FLOOR_REFLECTIVITY: f64 = 0.3;

/// The built-in 8 x 8 x 3 m pod: three racks with a four-branch ADT each and
/// four ceiling receivers along x = 4 m. Branch `i` of every ADT serves
/// receiver `i`.
pub fn paper_scenario(aim_mode: AimMode) -> Scenario {
    let room = Room { length_m: 8.0, width_m: 8.0, height_m: 3.0 };
    let rack_dims = Vec3::new(0.6, 1.2, 1.75);
    let racks = [(1.0, 1.0), (4.0, 4.0), (4.0, 7.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Rack {
            name: format!("Rack{}", i + 1),
            base_m: Vec3::new(x, y, 0.25),
            dims_m: rack_dims,
        })
        .collect();

    let receivers: Vec<WfovReceiver> = [1.0, 3.0, 5.0, 7.0]
        .iter()
        .enumerate()
        .map(|(i, &y)| WfovReceiver {
            name: format!("R{}", i + 1),
            position_m: Vec3::new(4.0, y, 3.0),
            normal: Vec3::DOWN,
            fov_half_angle_deg: 90.0,
            area_m2: 20e-6,
            responsivity_a_per_w: 0.6,
        })
        .collect();

    let adt_positions = [
        Vec3::new(1.3, 1.6, 2.0),
        Vec3::new(4.0, 4.0, 2.0),
        Vec3::new(4.0, 6.7, 2.0),
    ];
    let adts = adt_positions
        .iter()
        .enumerate()
        .map(|(a, &pos)| AngleDiversityTransmitter {
            name: format!("ADT{}", a + 1),
            branches: receivers
                .iter()
                .enumerate()
                .map(|(b, rx)| {
                    let aim = match aim_mode {
                        AimMode::Exact => aim_at(pos, rx.position_m),
                        AimMode::PaperAngles => {
                            AimAngles::new(PAPER_AZIMUTHS_DEG[a][b], PAPER_ELEVATIONS_DEG[a][b])
                        }
                    }
                    .expect("built-in geometry is well formed");
                    TransmitterBranch {
                        position_m: pos,
                        aim,
                        power_w: 0.15,
                        half_power_semi_angle_deg: 2.0,
                    }
                })
                .collect(),
        })
        .collect();

    Scenario::new(
        room,
        room.surfaces(
            DEFAULT_WALL_REFLECTIVITY,
            DEFAULT_CEILING_REFLECTIVITY,
            DEFAULT_FLOOR_REFLECTIVITY,
        ),
        racks,
        adts,
        receivers,
        NoiseParams::default(),
        SimulationParams { aim_mode, ..SimulationParams::default() },
    )
}

impl Scenario {
    pub fn new(
        room: Room,
        surfaces: Vec<Surface>,
        racks: Vec<Rack>,
        adts: Vec<AngleDiversityTransmitter>,
        receivers: Vec<WfovReceiver>,
        noise: NoiseParams,
        sim: SimulationParams,
    ) -> Self {
        let mut s = Scenario {
            schema_version: SCHEMA_VERSION,
            room,
            surfaces,
            racks,
            adts,
            receivers,
            noise,
            sim,
            occluders: Vec::new(),
        };
        s.refresh();
        s
    }

    /// Rebuilds derived data after the public fields were edited.
    pub fn refresh(&mut self) {
        self.occluders = self.racks.iter().map(Rack::body).collect();
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedSchema(s.schema_version));
        }
        s.refresh();
        Ok(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn environment(&self) -> Environment<'_> {
        Environment { surfaces: &self.surfaces, occluders: &self.occluders }
    }

    pub fn adt_index(&self, name: &str) -> Result<usize, ScenarioError> {
        self.adts
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| ScenarioError::UnknownEntity { kind: "ADT", name: name.to_string() })
    }

    pub fn receiver_index(&self, name: &str) -> Result<usize, ScenarioError> {
        self.receivers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| ScenarioError::UnknownEntity { kind: "receiver", name: name.to_string() })
    }

    pub fn branch(&self, adt: &str, index: usize) -> Result<&TransmitterBranch, ScenarioError> {
        let a = &self.adts[self.adt_index(adt)?];
        a.branches
            .get(index)
            .ok_or_else(|| ScenarioError::UnknownBranch { adt: adt.to_string(), index })
    }

    /// Copy with every transmitted power scaled to `power_w`.
    pub fn with_branch_power(&self, power_w: f64) -> Scenario {
        let mut s = self.clone();
        for b in s.adts.iter_mut().flat_map(|a| a.branches.iter_mut()) {
            b.power_w = power_w;
        }
        s
    }

    /// Copy with every assigned branch re-aimed straight at its receiver.
    pub fn with_exact_aim(&self) -> Scenario {
        let assignment = self.assign_links();
        let mut s = self.clone();
        for link in &assignment.links {
            let Some(rx) = link.receiver else { continue };
            let target = self.receivers[rx].position_m;
            let b = &mut s.adts[link.adt].branches[link.branch];
            if let Ok(aim) = aim_at(b.position_m, target) {
                b.aim = aim;
            }
        }
        s.sim.aim_mode = AimMode::Exact;
        s
    }

    /// Copy shifted by `by`; used to check translation invariance.
    pub fn translated(&self, by: Vec3) -> Scenario {
        let mut s = self.clone();
        for surf in &mut s.surfaces {
            surf.origin_m += by;
        }
        for r in &mut s.racks {
            r.base_m += by;
        }
        for b in s.adts.iter_mut().flat_map(|a| a.branches.iter_mut()) {
            b.position_m += by;
        }
        for r in &mut s.receivers {
            r.position_m += by;
        }
        s.refresh();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingCode {
    InvalidValue,
    OutsideRoom,
    AboveCeiling,
    DuplicateName,
    SurfaceNotRectangular,
    SurfaceFacesOutward,
    NoReceiverInCone,
    OutsideReceiverFov,
    LosBlocked,
    RateAboveBandwidth,
    UnassignedBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub subject: String,
    pub message: String,
}

impl Finding {
    fn error(code: FindingCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Finding { severity: Severity::Error, code, subject: subject.into(), message: message.into() }
    }

    fn warning(code: FindingCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Finding { severity: Severity::Warning, code, subject: subject.into(), message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.subject, self.message)
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl Scenario {
    /// Checks every invariant of the world model. Errors block simulation,
    /// warnings do not.
    pub fn validate(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        self.check_values(&mut out);
        self.check_names(&mut out);
        self.check_placement(&mut out);
        self.check_surfaces(&mut out);
        self.check_coverage(&mut out);
        out
    }

    /// [`Scenario::validate`] plus checks against a requested bit rate.
    pub fn validate_for_rate(&self, bit_rate_hz: f64) -> Vec<Finding> {
        let mut out = self.validate();
        if !positive(bit_rate_hz) {
            out.push(Finding::error(
                FindingCode::InvalidValue,
                "rate",
                format!("bit rate {bit_rate_hz} Hz must be positive"),
            ));
        } else if self.noise.noise_bandwidth_factor * bit_rate_hz > self.noise.receiver_bandwidth_hz {
            out.push(Finding::warning(
                FindingCode::RateAboveBandwidth,
                "rate",
                format!(
                    "{bit_rate_hz} Hz needs {} Hz of noise bandwidth; the {} Hz receiver caps it",
                    self.noise.noise_bandwidth_factor * bit_rate_hz,
                    self.noise.receiver_bandwidth_hz
                ),
            ));
        }
        out
    }

    fn check_values(&self, out: &mut Vec<Finding>) {
        let room = &self.room;
        if ![room.length_m, room.width_m, room.height_m].into_iter().all(positive) {
            out.push(Finding::error(FindingCode::InvalidValue, "room", "dimensions must be positive"));
        }
        for r in &self.racks {
            if ![r.dims_m.x, r.dims_m.y, r.dims_m.z].into_iter().all(positive) || !r.base_m.is_finite() {
                out.push(Finding::error(FindingCode::InvalidValue, &r.name, "rack dimensions must be positive"));
            }
        }
        for a in &self.adts {
            if a.branches.is_empty() {
                out.push(Finding::error(FindingCode::InvalidValue, &a.name, "ADT has no branches"));
            }
            for (i, b) in a.branches.iter().enumerate() {
                if let Err(e) = b.check() {
                    out.push(Finding::error(FindingCode::InvalidValue, format!("{}[{i}]", a.name), e.to_string()));
                }
            }
        }
        for r in &self.receivers {
            if let Err(e) = r.check() {
                out.push(Finding::error(FindingCode::InvalidValue, &r.name, e.to_string()));
            }
        }
        if let Err(e) = self.noise.check() {
            out.push(Finding::error(FindingCode::InvalidValue, "noise", e.to_string()));
        }
        if let Err(e) = self.sim.channel().check() {
            out.push(Finding::error(FindingCode::InvalidValue, "sim", e.to_string()));
        }
    }

    fn check_names(&self, out: &mut Vec<Finding>) {
        fn dupes<'a>(kind: &str, names: impl Iterator<Item = &'a str>, out: &mut Vec<Finding>) {
            let mut seen = HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    out.push(Finding::error(FindingCode::DuplicateName, n, format!("duplicate {kind} name")));
                }
            }
        }
        dupes("surface", self.surfaces.iter().map(|s| s.name.as_str()), out);
        dupes("rack", self.racks.iter().map(|s| s.name.as_str()), out);
        dupes("ADT", self.adts.iter().map(|s| s.name.as_str()), out);
        dupes("receiver", self.receivers.iter().map(|s| s.name.as_str()), out);
    }

    fn check_placement(&self, out: &mut Vec<Finding>) {
        let bounds = self.room.bounds();
        let outside = |subject: String, out: &mut Vec<Finding>| {
            out.push(Finding::error(FindingCode::OutsideRoom, subject, "outside room volume"));
        };
        for r in &self.racks {
            let body = r.body();
            if !(bounds.contains(body.min) && bounds.contains(body.max)) {
                outside(r.name.clone(), out);
            }
        }
        for a in &self.adts {
            for (i, b) in a.branches.iter().enumerate() {
                if !bounds.contains(b.position_m) {
                    outside(format!("{}[{i}]", a.name), out);
                }
            }
        }
        for r in &self.receivers {
            if r.position_m.z > self.room.height_m {
                out.push(Finding::error(FindingCode::AboveCeiling, &r.name, "receiver above the ceiling plane"));
            }
            if !bounds.contains(r.position_m) {
                outside(r.name.clone(), out);
            }
        }
    }

    fn check_surfaces(&self, out: &mut Vec<Finding>) {
        let center = self.room.center();
        for s in &self.surfaces {
            if !(0.0..=1.0).contains(&s.reflectivity) {
                out.push(Finding::error(FindingCode::InvalidValue, &s.name, "reflectivity outside [0, 1]"));
            }
            if let Some(size) = s.element_size_m {
                if !positive(size) {
                    out.push(Finding::error(FindingCode::InvalidValue, &s.name, "element size must be positive"));
                }
            }
            let Ok(normal) = s.normal() else {
                out.push(Finding::error(FindingCode::SurfaceNotRectangular, &s.name, "degenerate edge vectors"));
                continue;
            };
            if !s.edges_orthogonal() {
                out.push(Finding::error(FindingCode::SurfaceNotRectangular, &s.name, "edge vectors not orthogonal"));
            }
            if (center - s.center()).dot(normal) <= 0.0 {
                out.push(Finding::warning(
                    FindingCode::SurfaceFacesOutward,
                    &s.name,
                    "reflecting side faces away from the room center",
                ));
            }
        }
    }

    fn check_coverage(&self, out: &mut Vec<Finding>) {
        for a in &self.adts {
            for (i, b) in a.branches.iter().enumerate() {
                let subject = format!("{}[{i}]", a.name);
                let mut in_cone = 0;
                for r in &self.receivers {
                    let d = r.position_m - b.position_m;
                    let Ok(off_axis) = angle_between(b.direction(), d) else { continue };
                    if off_axis > b.half_power_semi_angle_deg {
                        continue;
                    }
                    in_cone += 1;
                    if let Ok(incidence) = angle_between(-d, r.normal) {
                        if incidence > r.fov_half_angle_deg {
                            out.push(Finding::warning(
                                FindingCode::OutsideReceiverFov,
                                &subject,
                                format!("{} is in the beam but sees it at {incidence:.2} deg, outside its FOV", r.name),
                            ));
                        }
                    }
                    for rack in &self.racks {
                        if rack.body().blocks_segment(b.position_m, r.position_m) {
                            out.push(Finding::warning(
                                FindingCode::LosBlocked,
                                &subject,
                                format!("line of sight to {} blocked by {}", r.name, rack.name),
                            ));
                        }
                    }
                }
                if in_cone == 0 {
                    out.push(Finding::warning(
                        FindingCode::NoReceiverInCone,
                        &subject,
                        "no receiver within half-power cone",
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignedLink {
    pub adt: usize,
    pub branch: usize,
    /// `None` when the branch delivers no direct power to any receiver.
    pub receiver: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkAssignment {
    pub links: Vec<AssignedLink>,
    pub warnings: Vec<Finding>,
}

impl Scenario {
    /// Gives every branch the receiver with the highest direct power.
    /// Ties go to the earlier receiver.
    pub fn assign_links(&self) -> LinkAssignment {
        let mut links = Vec::new();
        let mut warnings = Vec::new();
        for (ai, a) in self.adts.iter().enumerate() {
            for (bi, b) in a.branches.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (ri, r) in self.receivers.iter().enumerate() {
                    let p = los_power(b, r);
                    if p > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
                        best = Some((ri, p));
                    }
                }
                if best.is_none() {
                    warnings.push(Finding::warning(
                        FindingCode::UnassignedBranch,
                        format!("{}[{bi}]", a.name),
                        "branch reaches no receiver; assigned none",
                    ));
                }
                links.push(AssignedLink { adt: ai, branch: bi, receiver: best.map(|(r, _)| r) });
            }
        }
        LinkAssignment { links, warnings }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn errors(f: &[Finding]) -> Vec<&Finding> {
        f.iter().filter(|f| f.is_error()).collect()
    }

    #[test]
    fn paper_angle_tables_loaded_verbatim() {
        let s = paper_scenario(AimMode::PaperAngles);
        let az: Vec<f64> = s.adts[0].branches.iter().map(|b| b.aim.azimuth_deg()).collect();
        assert_eq!(az, vec![348.0, 27.0, 51.0, 63.0]);
        let el: Vec<f64> = s.adts[1].branches.iter().map(|b| b.aim.elevation_deg()).collect();
        assert_eq!(el, vec![18.0, 45.0, 45.0, 18.0]);
    }

    #[test]
    fn exact_adt3_elevations() {
        let s = paper_scenario(AimMode::Exact);
        let el: Vec<f64> = s.adts[2].branches.iter().map(|b| b.aim.elevation_deg()).collect();
        // atan(1 / |dy|) for dy = 5.7, 3.7, 1.7, 0.3
        let expect = [9.950_626_687_951_6, 15.124_007_308_310_6, 30.465_544_919_459_9, 73.300_755_766_006_4];
        for (got, want) in el.iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn both_modes_validate_cleanly() {
        for mode in [AimMode::Exact, AimMode::PaperAngles] {
            let f = paper_scenario(mode).validate();
            assert!(f.is_empty(), "{mode}: {f:?}");
        }
    }

    #[test]
    fn receiver_outside_room_is_an_error() {
        let mut s = paper_scenario(AimMode::PaperAngles);
        s.receivers[2].position_m = Vec3::new(9.0, 5.0, 2.5);
        let f = s.validate();
        let e = errors(&f);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].code, FindingCode::OutsideRoom);
        assert!(e[0].message.contains("outside room volume"));
        assert_eq!(e[0].subject, "R3");
    }

    #[test]
    fn receiver_above_ceiling() {
        let mut s = paper_scenario(AimMode::PaperAngles);
        s.receivers[0].position_m.z = 3.2;
        assert!(s.validate().iter().any(|f| f.code == FindingCode::AboveCeiling));
    }

    #[test]
    fn branch_aimed_at_floor_warns() {
        let mut s = paper_scenario(AimMode::PaperAngles);
        s.adts[1].branches[0].aim = AimAngles::new(270.0, -80.0).unwrap();
        let f = s.validate();
        assert!(errors(&f).is_empty());
        let w: Vec<_> = f.iter().filter(|f| f.code == FindingCode::NoReceiverInCone).collect();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].subject, "ADT2[0]");
        assert_eq!(w[0].message, "no receiver within half-power cone");
    }

    #[test]
    fn duplicate_names_and_bad_values() {
        let mut s = paper_scenario(AimMode::PaperAngles);
        s.receivers[1].name = "R1".into();
        s.receivers[3].area_m2 = 0.0;
        s.surfaces[0].reflectivity = 1.5;
        s.noise.noise_bandwidth_factor = 0.0;
        s.sim.bin_width_s = 0.0;
        let f = s.validate();
        assert!(f.iter().any(|f| f.code == FindingCode::DuplicateName));
        let invalid = f.iter().filter(|f| f.code == FindingCode::InvalidValue).count();
        assert_eq!(invalid, 4, "{f:?}");
    }

    #[test]
    fn skewed_surface_is_rejected() {
        let mut s = paper_scenario(AimMode::PaperAngles);
        s.surfaces[0].edge_v_m = Vec3::new(1.0, 8.0, 0.0);
        assert!(s.validate().iter().any(|f| f.code == FindingCode::SurfaceNotRectangular));
    }

    #[test]
    fn blocked_los_is_reported() {
        let mut s = paper_scenario(AimMode::Exact);
        // a tall cabinet between ADT2 and R1
        s.racks.push(Rack { name: "Cabinet".into(), base_m: Vec3::new(4.0, 2.5, 0.0), dims_m: Vec3::new(0.6, 0.6, 2.9) });
        s.refresh();
        let f = s.validate();
        let blocked: Vec<_> = f.iter().filter(|f| f.code == FindingCode::LosBlocked).collect();
        assert!(!blocked.is_empty());
        assert!(blocked.iter().any(|f| f.subject == "ADT2[0]" && f.message.contains("Cabinet")));
    }

    #[test]
    fn rate_above_bandwidth_warns() {
        let s = paper_scenario(AimMode::PaperAngles);
        assert!(s.validate_for_rate(2.8e9).is_empty());
        let f = s.validate_for_rate(1e10);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].code, FindingCode::RateAboveBandwidth);
        assert!(!f[0].is_error());
        assert!(errors(&s.validate_for_rate(-1.0)).len() == 1);
    }

    #[test]
    fn paper_assignment_is_diagonal() {
        for mode in [AimMode::Exact, AimMode::PaperAngles] {
            let a = paper_scenario(mode).assign_links();
            assert!(a.warnings.is_empty());
            assert_eq!(a.links.len(), 12);
            for l in &a.links {
                assert_eq!(l.receiver, Some(l.branch), "{mode}: {l:?}");
            }
        }
    }

    #[test]
    fn trivial_and_dead_assignments() {
        let mut s = paper_scenario(AimMode::Exact);
        s.adts.truncate(1);
        s.adts[0].branches.truncate(1);
        s.receivers.truncate(1);
        let a = s.assign_links();
        assert_eq!(a.links, vec![AssignedLink { adt: 0, branch: 0, receiver: Some(0) }]);

        s.adts[0].branches[0].aim = AimAngles::new(0.0, -90.0).unwrap();
        let a = s.assign_links();
        assert_eq!(a.links[0].receiver, None);
        assert_eq!(a.warnings.len(), 1);
    }

    #[test]
    fn exact_reaim_matches_builtin_exact() {
        let reaimed = paper_scenario(AimMode::PaperAngles).with_exact_aim();
        let exact = paper_scenario(AimMode::Exact);
        assert_eq!(reaimed, exact);
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let s = paper_scenario(AimMode::PaperAngles);
        let text = s.to_json_string();
        assert_eq!(Scenario::from_json_str(&text).unwrap(), s);

        let typo = text.replacen("\"power_w\"", "\"power_W\"", 1);
        assert!(matches!(Scenario::from_json_str(&typo), Err(ScenarioError::Json(_))));

        let v2 = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(Scenario::from_json_str(&v2), Err(ScenarioError::UnsupportedSchema(2))));

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value.as_object_mut().unwrap().remove("schema_version");
        assert!(Scenario::from_json_str(&value.to_string()).is_err());

        let bad_el = text.replacen("\"elevation_deg\": 20.0", "\"elevation_deg\": 120.0", 1);
        assert!(Scenario::from_json_str(&bad_el).is_err());
    }

    #[test]
    fn entity_lookup() {
        let s = paper_scenario(AimMode::PaperAngles);
        assert_eq!(s.receiver_index("R3").unwrap(), 2);
        assert!(matches!(s.receiver_index("R9"), Err(ScenarioError::UnknownEntity { .. })));
        assert!(s.branch("ADT2", 3).is_ok());
        assert!(matches!(s.branch("ADT2", 4), Err(ScenarioError::UnknownBranch { .. })));
    }

    #[test]
    fn rack_bodies_sit_inside_room() {
        let s = paper_scenario(AimMode::PaperAngles);
        let b = s.racks[2].body();
        assert_eq!(b.min, Vec3::new(3.7, 6.4, 0.25));
        assert_abs_diff_eq!(b.max.y, 7.6, epsilon = 1e-12);
        assert_eq!(b.max.z, 2.0);
    }
}
