//! Lambertian sources, wide-FOV detectors and channel computation.
//!
//! The line-of-sight gain is evaluated analytically. Reflected paths follow
//! the recursive multipath method for indoor optical channels: every room
//! surface is split into small elements; each element first collects power
//! as a detector and then re-emits it as a first-order Lambertian source
//! scaled by the surface reflectivity. Power is binned by total path delay.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cos_between_units, Aabb, AimAngles, GeometryError, Vec3};

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Default cap on the number of reflecting surface elements in one channel run.
pub const DEFAULT_MAX_ELEMENTS: usize = 250_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    #[error("half-power semi-angle {0} deg outside (0, 90)")]
    SemiAngleOutOfRange(f64),
    #[error("invalid transmitter branch: {0}")]
    InvalidBranch(String),
    #[error("invalid receiver '{name}': {reason}")]
    InvalidReceiver { name: String, reason: String },
    #[error("invalid channel parameter: {0}")]
    InvalidParams(String),
    #[error("{count} reflecting elements exceed the cap of {cap}")]
    TooManyElements { count: usize, cap: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Lambertian order `n = -ln 2 / ln(cos semi_angle)`.
pub fn lambertian_order(half_power_semi_angle_deg: f64) -> Result<f64, OpticsError> {
    let a = half_power_semi_angle_deg;
    if !(a > 0.0 && a < 90.0) {
        return Err(OpticsError::SemiAngleOutOfRange(a));
    }
    Ok(-std::f64::consts::LN_2 / a.to_radians().cos().ln())
}

/// One narrow-beam emitter of an angle diversity transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterBranch {
    pub position_m: Vec3,
    pub aim: AimAngles,
    pub power_w: f64,
    pub half_power_semi_angle_deg: f64,
}

impl TransmitterBranch {
    pub fn new(
        position_m: Vec3,
        aim: AimAngles,
        power_w: f64,
        half_power_semi_angle_deg: f64,
    ) -> Result<Self, OpticsError> {
        let b = TransmitterBranch {
            position_m,
            aim,
            power_w,
            half_power_semi_angle_deg,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), OpticsError> {
        if !self.position_m.is_finite() {
            return Err(OpticsError::InvalidBranch("non-finite position".into()));
        }
        if !(self.power_w > 0.0 && self.power_w.is_finite()) {
            return Err(OpticsError::InvalidBranch(format!(
                "power {} W must be positive",
                self.power_w
            )));
        }
        lambertian_order(self.half_power_semi_angle_deg)?;
        Ok(())
    }

    pub fn lambertian_order(&self) -> f64 {
        lambertian_order(self.half_power_semi_angle_deg).unwrap_or(f64::NAN)
    }

    pub fn direction(&self) -> Vec3 {
        self.aim.direction()
    }

    pub fn with_power(&self, power_w: f64) -> Self {
        TransmitterBranch {
            power_w,
            ..self.clone()
        }
    }
}

/// An angle diversity transmitter: a named bundle of independently aimed branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleDiversityTransmitter {
    pub name: String,
    pub branches: Vec<TransmitterBranch>,
}

/// Bare-area wide-field-of-view photodetector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WfovReceiver {
    pub name: String,
    pub position_m: Vec3,
    pub normal: Vec3,
    pub fov_half_angle_deg: f64,
    pub area_m2: f64,
    pub responsivity_a_per_w: f64,
}

impl WfovReceiver {
    pub fn check(&self) -> Result<(), OpticsError> {
        let bad = |reason: String| OpticsError::InvalidReceiver {
            name: self.name.clone(),
            reason,
        };
        if !self.position_m.is_finite() {
            return Err(bad("non-finite position".into()));
        }
        if !self.normal.is_unit() {
            return Err(bad(format!("normal {} is not unit length", self.normal)));
        }
        if !(self.area_m2 > 0.0 && self.area_m2.is_finite()) {
            return Err(bad(format!("area {} m2 must be positive", self.area_m2)));
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg <= 90.0) {
            return Err(bad(format!(
                "FOV half-angle {} deg outside (0, 90]",
                self.fov_half_angle_deg
            )));
        }
        if !(self.responsivity_a_per_w >= 0.0 && self.responsivity_a_per_w.is_finite()) {
            return Err(bad("responsivity must be non-negative".into()));
        }
        Ok(())
    }

    /// Fraction of incident power accepted for light arriving along `from_source`
    /// (unit vector source -> receiver): `cos(theta)` inside the FOV, else 0.
    fn acceptance(&self, from_source: Vec3) -> f64 {
        let c = cos_between_units(-from_source, self.normal);
        if c <= 0.0 || c.acos().to_degrees() > self.fov_half_angle_deg {
            0.0
        } else {
            c
        }
    }
}

/// A reflecting rectangle `origin + s * edge_u + t * edge_v`, `s, t` in `[0, 1]`.
/// Its reflecting side faces along `edge_u x edge_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub name: String,
    pub origin_m: Vec3,
    pub edge_u_m: Vec3,
    pub edge_v_m: Vec3,
    pub reflectivity: f64,
    /// Overrides the run-wide element size for this surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_size_m: Option<f64>,
}

impl Surface {
    pub fn new(name: &str, origin_m: Vec3, edge_u_m: Vec3, edge_v_m: Vec3, reflectivity: f64) -> Self {
        Surface {
            name: name.to_string(),
            origin_m,
            edge_u_m,
            edge_v_m,
            reflectivity,
            element_size_m: None,
        }
    }

    pub fn normal(&self) -> Result<Vec3, GeometryError> {
        self.edge_u_m.cross(self.edge_v_m).normalized()
    }

    pub fn area_m2(&self) -> f64 {
        self.edge_u_m.cross(self.edge_v_m).norm()
    }

    pub fn center(&self) -> Vec3 {
        self.origin_m + self.edge_u_m * 0.5 + self.edge_v_m * 0.5
    }

    pub fn edges_orthogonal(&self) -> bool {
        let scale = self.edge_u_m.norm() * self.edge_v_m.norm();
        self.edge_u_m.dot(self.edge_v_m).abs() <= 1e-9 * scale
    }

    fn grid(&self, element_size_m: f64) -> (usize, usize) {
        let size = self.element_size_m.unwrap_or(element_size_m);
        let cells = |len: f64| ((len / size) - 1e-9).ceil().max(1.0) as usize;
        (cells(self.edge_u_m.norm()), cells(self.edge_v_m.norm()))
    }

    pub fn element_count(&self, element_size_m: f64) -> usize {
        let (nu, nv) = self.grid(element_size_m);
        nu * nv
    }

    fn push_elements(&self, element_size_m: f64, out: &mut Vec<Element>) -> Result<(), OpticsError> {
        let normal = self.normal()?;
        let (nu, nv) = self.grid(element_size_m);
        let area = self.area_m2() / (nu * nv) as f64;
        for i in 0..nu {
            let su = (i as f64 + 0.5) / nu as f64;
            for j in 0..nv {
                let sv = (j as f64 + 0.5) / nv as f64;
                out.push(Element {
                    position: self.origin_m + self.edge_u_m * su + self.edge_v_m * sv,
                    normal,
                    area,
                    reflectivity: self.reflectivity,
                });
            }
        }
        Ok(())
    }
}

/// Everything besides the link endpoints that shapes the channel.
#[derive(Debug, Clone, Copy)]
pub struct Environment<'a> {
    pub surfaces: &'a [Surface],
    /// Opaque boxes (rack bodies). They always block reflected paths; they
    /// block the direct path only when [`ChannelParams::los_shadowing`] is set.
    pub occluders: &'a [Aabb],
}

impl Environment<'_> {
    fn blocked(&self, a: Vec3, b: Vec3) -> bool {
        self.occluders.iter().any(|o| o.blocks_segment(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub max_reflections: u32,
    pub bin_width_s: f64,
    pub element_size_m: f64,
    pub max_elements: usize,
    pub los_shadowing: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            max_reflections: 1,
            bin_width_s: 1e-10,
            element_size_m: 0.1,
            max_elements: DEFAULT_MAX_ELEMENTS,
            los_shadowing: false,
        }
    }
}

impl ChannelParams {
    pub fn check(&self) -> Result<(), OpticsError> {
        if !(self.bin_width_s > 0.0 && self.bin_width_s.is_finite()) {
            return Err(OpticsError::InvalidParams(format!(
                "bin width {} s must be positive",
                self.bin_width_s
            )));
        }
        if !(self.element_size_m > 0.0 && self.element_size_m.is_finite()) {
            return Err(OpticsError::InvalidParams(format!(
                "element size {} m must be positive",
                self.element_size_m
            )));
        }
        Ok(())
    }
}

/// Time-binned received optical power. Bin `i` holds power arriving in
/// `[start + i * width, start + (i + 1) * width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub bin_width_s: f64,
    pub start_time_s: f64,
    pub bins: Vec<f64>,
    pub los_power_w: f64,
    pub los_delay_s: f64,
}

impl ImpulseResponse {
    pub fn bin_time_s(&self, i: usize) -> f64 {
        self.start_time_s + i as f64 * self.bin_width_s
    }
}

pub fn channel_total_power(ir: &ImpulseResponse) -> f64 {
    ir.bins.iter().fold(0.0, |acc, p| acc + p)
}

/// `((n + 1) / 2 pi) * P * cos^n(phi)`, zero at and beyond 90 deg off-axis.
pub fn radiant_intensity(branch: &TransmitterBranch, direction: Vec3) -> Result<f64, OpticsError> {
    let u = direction.normalized()?;
    Ok(intensity_along_unit(branch, u))
}

fn intensity_along_unit(branch: &TransmitterBranch, u: Vec3) -> f64 {
    let c = cos_between_units(branch.direction(), u);
    if c <= 0.0 {
        return 0.0;
    }
    let n = branch.lambertian_order();
    (n + 1.0) / (2.0 * PI) * branch.power_w * c.powf(n)
}

/// Direct-path received power (W), treating the detector as a point with an
/// area factor.
pub fn los_power(branch: &TransmitterBranch, receiver: &WfovReceiver) -> f64 {
    let d = receiver.position_m - branch.position_m;
    let d2 = d.norm_squared();
    if d2 == 0.0 {
        return 0.0;
    }
    let u = d * (1.0 / d2.sqrt());
    let accept = receiver.acceptance(u);
    if accept == 0.0 {
        return 0.0;
    }
    intensity_along_unit(branch, u) * receiver.area_m2 * accept / d2
}

#[derive(Debug, Clone, Copy)]
struct Element {
    position: Vec3,
    normal: Vec3,
    area: f64,
    reflectivity: f64,
}

impl Element {
    /// Power gain and delay from this element re-emitting (order-1 Lambertian,
    /// scaled by reflectivity) to a target point with given normal and area.
    fn emit_to(&self, target: Vec3, target_normal: Vec3, target_area: f64) -> Option<(f64, f64)> {
        let d = target - self.position;
        let d2 = d.norm_squared();
        if d2 == 0.0 {
            return None;
        }
        let dist = d2.sqrt();
        let u = d * (1.0 / dist);
        let cos_out = cos_between_units(self.normal, u);
        let cos_in = cos_between_units(target_normal, -u);
        if cos_out <= 0.0 || cos_in <= 0.0 {
            return None;
        }
        let gain = self.reflectivity * cos_out / PI * target_area * cos_in / d2;
        Some((gain, dist / SPEED_OF_LIGHT_M_PER_S))
    }
}

/// Sparse run of time bins.
#[derive(Debug, Clone, Default)]
struct BinRun {
    first: usize,
    values: Vec<f64>,
}

impl BinRun {
    fn add(&mut self, bin: usize, p: f64) {
        if self.values.is_empty() {
            self.first = bin;
            self.values.push(p);
            return;
        }
        if bin < self.first {
            let grow = self.first - bin;
            self.values.splice(0..0, std::iter::repeat_n(0.0, grow));
            self.first = bin;
        }
        let k = bin - self.first;
        if k >= self.values.len() {
            self.values.resize(k + 1, 0.0);
        }
        self.values[k] += p;
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(k, v)| (self.first + k, *v))
    }
}

fn bin_of(t: f64, width: f64) -> usize {
    (t / width).floor() as usize
}

fn deposit(bins: &mut Vec<f64>, bin: usize, p: f64) {
    if bin >= bins.len() {
        bins.resize(bin + 1, 0.0);
    }
    bins[bin] += p;
}

/// Shifts a bin (taken at its center) by `delay` and re-bins it.
fn shifted_bin(bin: usize, delay: f64, width: f64) -> usize {
    bin_of((bin as f64 + 0.5) * width + delay, width)
}

/// Channel impulse response from one branch to one receiver.
///
/// Order 0 deposits the analytic [`los_power`] at delay `d / c`. Each further
/// order bounces power across the discretized surfaces. Reflected paths are
/// blocked by `env.occluders`. First-bounce paths keep exact delays; later
/// bounces are re-binned at bin centers.
pub fn impulse_response(
    env: &Environment<'_>,
    branch: &TransmitterBranch,
    receiver: &WfovReceiver,
    params: &ChannelParams,
) -> Result<ImpulseResponse, OpticsError> {
    params.check()?;
    branch.check()?;
    receiver.check()?;
    let width = params.bin_width_s;

    let tx = branch.position_m;
    let rx = receiver.position_m;
    let los_delay_s = (rx - tx).norm() / SPEED_OF_LIGHT_M_PER_S;
    let mut los_power_w = los_power(branch, receiver);
    if params.los_shadowing && env.blocked(tx, rx) {
        los_power_w = 0.0;
    }

    let mut bins = vec![0.0; bin_of(los_delay_s, width) + 1];
    bins[bin_of(los_delay_s, width)] += los_power_w;

    if params.max_reflections > 0 {
        let elements = discretize(env.surfaces, params)?;
        reflect(env, &elements, branch, receiver, params, &mut bins);
    }

    Ok(ImpulseResponse {
        bin_width_s: width,
        start_time_s: 0.0,
        bins,
        los_power_w,
        los_delay_s,
    })
}

fn discretize(surfaces: &[Surface], params: &ChannelParams) -> Result<Vec<Element>, OpticsError> {
    let reflecting: Vec<&Surface> = surfaces.iter().filter(|s| s.reflectivity > 0.0).collect();
    let count: usize = reflecting
        .iter()
        .map(|s| s.element_count(params.element_size_m))
        .sum();
    if count > params.max_elements {
        return Err(OpticsError::TooManyElements {
            count,
            cap: params.max_elements,
        });
    }
    let mut elements = Vec::with_capacity(count);
    for s in reflecting {
        s.push_elements(params.element_size_m, &mut elements)?;
    }
    Ok(elements)
}

fn reflect(
    env: &Environment<'_>,
    elements: &[Element],
    branch: &TransmitterBranch,
    receiver: &WfovReceiver,
    params: &ChannelParams,
    bins: &mut Vec<f64>,
) {
    let width = params.bin_width_s;
    let tx = branch.position_m;
    let rx = receiver.position_m;

    // first incidence: source -> element, exact arrival times
    let mut first_hits: Vec<(usize, f64, f64)> = Vec::new();
    for (k, e) in elements.iter().enumerate() {
        let d = e.position - tx;
        let d2 = d.norm_squared();
        if d2 == 0.0 {
            continue;
        }
        let dist = d2.sqrt();
        let u = d * (1.0 / dist);
        let cos_in = cos_between_units(e.normal, -u);
        if cos_in <= 0.0 {
            continue;
        }
        let intensity = intensity_along_unit(branch, u);
        if intensity == 0.0 {
            continue;
        }
        if env.blocked(tx, e.position) {
            continue;
        }
        let p = intensity * e.area * cos_in / d2;
        if p > 0.0 {
            first_hits.push((k, dist / SPEED_OF_LIGHT_M_PER_S, p));
        }
    }

    let to_receiver = |e: &Element| -> Option<(f64, f64)> {
        let (g, delay) = e.emit_to(rx, receiver.normal, receiver.area_m2)?;
        let u = (rx - e.position).normalized().ok()?;
        if receiver.acceptance(u) == 0.0 || env.blocked(e.position, rx) {
            return None;
        }
        Some((g, delay))
    };

    for &(k, t, p) in &first_hits {
        if let Some((g, delay)) = to_receiver(&elements[k]) {
            deposit(bins, bin_of(t + delay, width), p * g);
        }
    }

    if params.max_reflections < 2 {
        return;
    }

    let mut arrivals: Vec<Option<BinRun>> = vec![None; elements.len()];
    for &(k, t, p) in &first_hits {
        arrivals[k].get_or_insert_with(BinRun::default).add(bin_of(t, width), p);
    }

    for _order in 2..=params.max_reflections {
        let mut next: Vec<Option<BinRun>> = vec![None; elements.len()];
        for (s, run) in arrivals.iter().enumerate() {
            let Some(run) = run else { continue };
            let src = &elements[s];
            for (j, dst) in elements.iter().enumerate() {
                if j == s {
                    continue;
                }
                let Some((g, delay)) = src.emit_to(dst.position, dst.normal, dst.area) else {
                    continue;
                };
                if env.blocked(src.position, dst.position) {
                    continue;
                }
                let out = next[j].get_or_insert_with(BinRun::default);
                for (b, p) in run.iter() {
                    out.add(shifted_bin(b, delay, width), p * g);
                }
            }
        }
        for (j, run) in next.iter().enumerate() {
            let Some(run) = run else { continue };
            if let Some((g, delay)) = to_receiver(&elements[j]) {
                for (b, p) in run.iter() {
                    deposit(bins, shifted_bin(b, delay, width), p * g);
                }
            }
        }
        arrivals = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn branch_toward(from: Vec3, to: Vec3, power: f64, semi: f64) -> TransmitterBranch {
        TransmitterBranch::new(from, crate::geometry::aim_at(from, to).unwrap(), power, semi).unwrap()
    }

    fn receiver_at(p: Vec3, normal: Vec3) -> WfovReceiver {
        WfovReceiver {
            name: "R".into(),
            position_m: p,
            normal,
            fov_half_angle_deg: 90.0,
            area_m2: 2e-5,
            responsivity_a_per_w: 0.6,
        }
    }

    #[test]
    fn lambertian_order_examples() {
        assert_abs_diff_eq!(lambertian_order(60.0).unwrap(), 1.0, epsilon = 1e-12);
        // -ln2 / ln(cos 2 deg) at 40 digits: 1137.502905697840...
        assert_abs_diff_eq!(lambertian_order(2.0).unwrap(), 1_137.502_905_697_84, epsilon = 1e-6);
        assert_abs_diff_eq!(lambertian_order(45.0).unwrap(), 2.0, epsilon = 1e-6);
        for bad in [0.0, 90.0, -5.0, f64::NAN] {
            assert!(lambertian_order(bad).is_err());
        }
    }

    #[test]
    fn half_power_at_semi_angle() {
        for semi in [2.0, 10.0, 30.0, 60.0, 75.0] {
            let n = lambertian_order(semi).unwrap();
            assert_abs_diff_eq!(semi.to_radians().cos().powf(n), 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn radiant_intensity_examples() {
        let b = TransmitterBranch::new(Vec3::ZERO, AimAngles::new(0.0, 90.0).unwrap(), 0.15, 2.0).unwrap();
        let on_axis = radiant_intensity(&b, Vec3::UP).unwrap();
        // (n + 1) / 2pi * 0.15 with n from the 40-digit evaluation
        assert_abs_diff_eq!(on_axis, 27.179_754_774_944_59, epsilon = 1e-9);

        let off = AimAngles::new(0.0, 88.0).unwrap().direction();
        assert_abs_diff_eq!(radiant_intensity(&b, off).unwrap() / on_axis, 0.5, epsilon = 1e-6);

        let side = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(radiant_intensity(&b, side).unwrap(), 0.0);
        assert!(radiant_intensity(&b, Vec3::ZERO).is_err());
    }

    #[test]
    fn los_power_on_axis() {
        let rx = receiver_at(Vec3::new(0.0, 0.0, 1.0), Vec3::DOWN);
        let b = branch_toward(Vec3::ZERO, rx.position_m, 0.15, 2.0);
        let p = los_power(&b, &rx);
        assert_relative_eq!(p, 27.179_754_774_944_59 * 2e-5, max_relative = 1e-12);
        assert_relative_eq!(p, 5.434e-4, max_relative = 0.01);
    }

    #[test]
    fn los_power_grazing_and_out_of_fov() {
        // receiver normal perpendicular to the incoming ray
        let rx = receiver_at(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
        let b = branch_toward(Vec3::ZERO, rx.position_m, 0.15, 2.0);
        assert_eq!(los_power(&b, &rx), 0.0);

        let mut narrow = receiver_at(Vec3::new(0.0, 1.0, 1.0), Vec3::DOWN);
        narrow.fov_half_angle_deg = 30.0;
        let b = branch_toward(Vec3::ZERO, narrow.position_m, 0.15, 2.0);
        assert_eq!(los_power(&b, &narrow), 0.0);
        narrow.fov_half_angle_deg = 50.0;
        assert!(los_power(&b, &narrow) > 0.0);
    }

    #[test]
    fn los_power_adt2_to_r1() {
        let rx = receiver_at(Vec3::new(4.0, 1.0, 3.0), Vec3::DOWN);
        let b = branch_toward(Vec3::new(4.0, 4.0, 2.0), rx.position_m, 0.15, 2.0);
        // I0 * A * cos(theta) / d^2 with d^2 = 10, cos(theta) = 1/sqrt(10)
        let expect = 27.179_754_774_944_59 * 2e-5 / 10.0 / 10.0_f64.sqrt();
        assert_relative_eq!(los_power(&b, &rx), expect, max_relative = 1e-12);
        assert_relative_eq!(los_power(&b, &rx), 1.72e-5, max_relative = 0.02);
    }

    fn box_room(rho: f64) -> Vec<Surface> {
        let (l, w, h) = (4.0, 4.0, 3.0);
        vec![
            Surface::new("floor", Vec3::ZERO, Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, w, 0.0), rho),
            Surface::new("ceiling", Vec3::new(0.0, 0.0, h), Vec3::new(0.0, w, 0.0), Vec3::new(l, 0.0, 0.0), rho),
            Surface::new("wall_x_min", Vec3::ZERO, Vec3::new(0.0, w, 0.0), Vec3::new(0.0, 0.0, h), rho),
            Surface::new("wall_x_max", Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(0.0, w, 0.0), rho),
            Surface::new("wall_y_min", Vec3::ZERO, Vec3::new(0.0, 0.0, h), Vec3::new(l, 0.0, 0.0), rho),
            Surface::new("wall_y_max", Vec3::new(0.0, w, 0.0), Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, 0.0, h), rho),
        ]
    }

    #[test]
    fn box_room_normals_face_inward() {
        let center = Vec3::new(2.0, 2.0, 1.5);
        for s in box_room(0.5) {
            let n = s.normal().unwrap();
            assert!((center - s.center()).dot(n) > 0.0, "{}", s.name);
            assert!(s.edges_orthogonal());
        }
    }

    #[test]
    fn order_zero_is_single_los_bin() {
        let surfaces = box_room(0.8);
        let env = Environment { surfaces: &surfaces, occluders: &[] };
        let rx = receiver_at(Vec3::new(2.0, 3.0, 3.0), Vec3::DOWN);
        let b = branch_toward(Vec3::new(2.0, 1.0, 1.0), rx.position_m, 0.15, 2.0);
        let params = ChannelParams { max_reflections: 0, ..Default::default() };
        let ir = impulse_response(&env, &b, &rx, &params).unwrap();
        let nonzero: Vec<_> = ir.bins.iter().enumerate().filter(|(_, p)| **p != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        let (k, p) = nonzero[0];
        assert_eq!(*p, los_power(&b, &rx));
        assert_eq!(k, (ir.los_delay_s / ir.bin_width_s).floor() as usize);
        assert_eq!(channel_total_power(&ir), los_power(&b, &rx));
        assert_relative_eq!(ir.los_delay_s, 8.0_f64.sqrt() / SPEED_OF_LIGHT_M_PER_S, max_relative = 1e-15);
    }

    #[test]
    fn zero_reflectivity_collapses_to_los() {
        let surfaces = box_room(0.0);
        let env = Environment { surfaces: &surfaces, occluders: &[] };
        let rx = receiver_at(Vec3::new(2.0, 3.0, 3.0), Vec3::DOWN);
        let b = branch_toward(Vec3::new(2.0, 1.0, 1.0), rx.position_m, 0.15, 10.0);
        let p0 = ChannelParams { max_reflections: 0, element_size_m: 0.25, ..Default::default() };
        let p2 = ChannelParams { max_reflections: 2, ..p0 };
        let a = impulse_response(&env, &b, &rx, &p0).unwrap();
        let b2 = impulse_response(&env, &b, &rx, &p2).unwrap();
        assert_eq!(a, b2);
    }

    #[test]
    fn diffuse_source_gains_from_reflections() {
        // a wide beam aimed at the floor sees the receiver only via reflections
        let surfaces = box_room(0.8);
        let env = Environment { surfaces: &surfaces, occluders: &[] };
        let rx = receiver_at(Vec3::new(1.0, 1.0, 2.9), Vec3::DOWN);
        let b = TransmitterBranch::new(
            Vec3::new(3.0, 3.0, 2.5),
            AimAngles::new(0.0, -90.0).unwrap(),
            1.0,
            60.0,
        )
        .unwrap();
        let mut params = ChannelParams { max_reflections: 0, element_size_m: 0.25, ..Default::default() };
        let mut last = 0.0;
        for k in 0..=3 {
            params.max_reflections = k;
            let ir = impulse_response(&env, &b, &rx, &params).unwrap();
            let total = channel_total_power(&ir);
            assert!(total >= last, "order {k}: {total} < {last}");
            assert!(total < b.power_w);
            assert!(ir.bins.iter().all(|p| *p >= 0.0));
            last = total;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn occluder_blocks_reflected_path() {
        let surfaces = box_room(0.8);
        let rx = receiver_at(Vec3::new(1.0, 1.0, 2.9), Vec3::DOWN);
        let b = TransmitterBranch::new(
            Vec3::new(3.0, 3.0, 2.5),
            AimAngles::new(0.0, -90.0).unwrap(),
            1.0,
            30.0,
        )
        .unwrap();
        let params = ChannelParams { max_reflections: 1, element_size_m: 0.25, ..Default::default() };
        let open = Environment { surfaces: &surfaces, occluders: &[] };
        // a slab under the transmitter hides the floor spot
        let slab = [Aabb::new(Vec3::new(2.0, 2.0, 1.0), Vec3::new(4.0, 4.0, 1.2))];
        let shut = Environment { surfaces: &surfaces, occluders: &slab };
        let p_open = channel_total_power(&impulse_response(&open, &b, &rx, &params).unwrap());
        let p_shut = channel_total_power(&impulse_response(&shut, &b, &rx, &params).unwrap());
        assert!(p_shut < p_open);
    }

    #[test]
    fn los_shadowing_is_opt_in() {
        let rx = receiver_at(Vec3::new(0.0, 0.0, 3.0), Vec3::DOWN);
        let b = branch_toward(Vec3::ZERO, rx.position_m, 0.15, 2.0);
        let slab = [Aabb::new(Vec3::new(-1.0, -1.0, 1.0), Vec3::new(1.0, 1.0, 1.5))];
        let env = Environment { surfaces: &[], occluders: &slab };
        let mut params = ChannelParams { max_reflections: 0, ..Default::default() };
        let ir = impulse_response(&env, &b, &rx, &params).unwrap();
        assert!(ir.los_power_w > 0.0);
        params.los_shadowing = true;
        let ir = impulse_response(&env, &b, &rx, &params).unwrap();
        assert_eq!(ir.los_power_w, 0.0);
        assert_eq!(channel_total_power(&ir), 0.0);
    }

    #[test]
    fn element_cap_is_enforced() {
        let surfaces = box_room(0.8);
        let env = Environment { surfaces: &surfaces, occluders: &[] };
        let rx = receiver_at(Vec3::new(2.0, 3.0, 3.0), Vec3::DOWN);
        let b = branch_toward(Vec3::new(2.0, 1.0, 1.0), rx.position_m, 0.15, 2.0);
        let params = ChannelParams { max_reflections: 1, element_size_m: 0.01, max_elements: 10_000, ..Default::default() };
        assert!(matches!(
            impulse_response(&env, &b, &rx, &params),
            Err(OpticsError::TooManyElements { cap: 10_000, .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let rx = receiver_at(Vec3::new(0.0, 0.0, 1.0), Vec3::DOWN);
        let b = branch_toward(Vec3::ZERO, rx.position_m, 0.15, 2.0);
        let env = Environment { surfaces: &[], occluders: &[] };
        let bad = ChannelParams { bin_width_s: 0.0, ..Default::default() };
        assert!(impulse_response(&env, &b, &rx, &bad).is_err());
        let bad = ChannelParams { element_size_m: -1.0, ..Default::default() };
        assert!(impulse_response(&env, &b, &rx, &bad).is_err());
    }

    #[test]
    fn channel_total_power_simple_cases() {
        let mut ir = ImpulseResponse { bin_width_s: 1e-10, start_time_s: 0.0, bins: vec![], los_power_w: 0.0, los_delay_s: 0.0 };
        assert_eq!(channel_total_power(&ir), 0.0);
        ir.bins = vec![3.5e-6];
        assert_eq!(channel_total_power(&ir), 3.5e-6);
    }

    #[test]
    fn bin_run_grows_both_ways() {
        let mut r = BinRun::default();
        r.add(5, 1.0);
        r.add(3, 2.0);
        r.add(8, 4.0);
        r.add(5, 1.0);
        let v: Vec<_> = r.iter().collect();
        assert_eq!(v, vec![(3, 2.0), (5, 2.0), (8, 4.0)]);
    }
}
