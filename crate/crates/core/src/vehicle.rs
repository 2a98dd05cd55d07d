//! Nonlinear single-track model with simplified pure-side-slip Magic Formula
//! axles, longitudinal load transfer and open-differential rear drive.
//!
//! All model equations are generic over [`Scalar`] so the same code yields
//! values, exact Jacobians and exact Hessians.

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Chassis constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Mass [kg].
    pub m: f64,
    /// Yaw inertia [kg m^2].
    #[serde(rename = "I_z")]
    pub i_z: f64,
    /// Wheelbase [m].
    #[serde(rename = "L")]
    pub wheelbase: f64,
    /// Static fraction of the weight carried by the front axle.
    pub wd_front: f64,
    /// Centre-of-gravity height [m].
    pub h_g: f64,
    /// Fraction of the total braking force applied at the front axle.
    pub brake_balance_front: f64,
    /// Longitudinal friction coefficients used in the saturation ratio.
    pub mu_x_front: f64,
    pub mu_x_rear: f64,
    /// Road-wheel steering limit [rad].
    pub delta_max: f64,
    /// Rear traction force limit [N].
    #[serde(rename = "X2a_max")]
    pub x2a_max: f64,
    /// Braking force limit (magnitude) [N].
    #[serde(rename = "X2b_max")]
    pub x2b_max: f64,
    /// Power cap [W].
    #[serde(rename = "P_max")]
    pub p_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1875.0,
            i_z: 3341.0,
            wheelbase: 2.97,
            wd_front: 0.53,
            h_g: 0.5,
            brake_balance_front: 0.6,
            mu_x_front: 1.4,
            mu_x_rear: 1.4,
            delta_max: 0.35,
            x2a_max: 9000.0,
            x2b_max: 40000.0,
            p_max: 350_000.0,
        }
    }
}

impl VehicleParams {
    /// CoG to front axle distance.
    pub fn a1(&self) -> f64 {
        self.wheelbase * (1.0 - self.wd_front)
    }

    /// CoG to rear axle distance.
    pub fn a2(&self) -> f64 {
        self.wheelbase * self.wd_front
    }

    pub fn mu_x(&self, axle: Axle) -> f64 {
        match axle {
            Axle::Front => self.mu_x_front,
            Axle::Rear => self.mu_x_rear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("I_z", self.i_z),
            ("L", self.wheelbase),
            ("h_g", self.h_g),
            ("mu_x_front", self.mu_x_front),
            ("mu_x_rear", self.mu_x_rear),
            ("delta_max", self.delta_max),
            ("X2a_max", self.x2a_max),
            ("X2b_max", self.x2b_max),
            ("P_max", self.p_max),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !(self.wd_front > 0.0 && self.wd_front < 1.0) {
            return Err(Error::Config("wd_front must lie in (0, 1)".into()));
        }
        if !(self.brake_balance_front > 0.0 && self.brake_balance_front < 1.0) {
            return Err(Error::Config("brake_balance_front must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-axle Magic Formula coefficient vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxleTireParams {
    #[serde(rename = "F_z0")]
    pub fz0: f64,
    #[serde(rename = "p_Cy1")]
    pub p_cy1: f64,
    #[serde(rename = "p_Dy1")]
    pub p_dy1: f64,
    #[serde(rename = "p_Dy2")]
    pub p_dy2: f64,
    #[serde(rename = "p_Ey1")]
    pub p_ey1: f64,
    #[serde(rename = "p_Ey2")]
    pub p_ey2: f64,
    #[serde(rename = "p_Ky1")]
    pub p_ky1: f64,
    #[serde(rename = "p_Ky2")]
    pub p_ky2: f64,
}

impl AxleTireParams {
    pub const NAMES: [&'static str; 8] =
        ["F_z0", "p_Cy1", "p_Dy1", "p_Dy2", "p_Ey1", "p_Ey2", "p_Ky1", "p_Ky2"];

    /// Calibrated front axle.
    pub const FRONT: Self = Self::from_array([11050.0, 2.47, 1.85, -0.34, 0.57, 0.59, 28.29, 3.04]);
    /// Calibrated rear axle.
    pub const REAR: Self = Self::from_array([9210.0, 1.92, 1.03, -0.34, 0.57, 0.59, 28.29, 3.04]);
    /// Initial guess taken from the simulator tire files.
    pub const START: Self = Self::from_array([6500.0, 1.45, 1.09, -0.20, 0.81, 0.34, 26.94, 3.20]);

    pub const fn from_array(p: [f64; 8]) -> Self {
        Self {
            fz0: p[0],
            p_cy1: p[1],
            p_dy1: p[2],
            p_dy2: p[3],
            p_ey1: p[4],
            p_ey2: p[5],
            p_ky1: p[6],
            p_ky2: p[7],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.fz0, self.p_cy1, self.p_dy1, self.p_dy2, self.p_ey1, self.p_ey2, self.p_ky1,
            self.p_ky2,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fz0 > 0.0) {
            return Err(Error::Config("F_z0 must be positive".into()));
        }
        if !(self.p_dy1 > 0.0) {
            return Err(Error::Config("p_Dy1 must be positive".into()));
        }
        if !(self.p_cy1 > 1.0) {
            return Err(Error::Config("p_Cy1 must exceed 1".into()));
        }
        Ok(())
    }
}

/// Simplified pure-side-slip Magic Formula, generic over both the operating
/// point and the coefficient vector `[F_z0, p_Cy1, p_Dy1, p_Dy2, p_Ey1, p_Ey2, p_Ky1, p_Ky2]`.
pub fn magic_formula<T: Scalar>(alpha: T, fz: T, p: &[T; 8]) -> T {
    let [fz0, p_cy1, p_dy1, p_dy2, p_ey1, p_ey2, p_ky1, p_ky2] = *p;
    let dfz = (fz - fz0) / fz0;
    let d = (p_dy1 + p_dy2 * dfz) * fz;
    let c = p_cy1;
    let b = p_ky1 * fz0 * ((fz / (p_ky2 * fz0)).atan() * 2.0).sin() / (c * d);
    let e = p_ey1 + p_ey2 * dfz;
    let ba = b * alpha;
    let atan_ba = ba.atan();
    d * (c * atan_ba - e * (ba - atan_ba)).sin()
}

/// Axle lateral force `F_y(alpha, F_z)` [N].
pub fn axle_lateral_force(alpha: f64, fz: f64, p: &AxleTireParams) -> Result<f64> {
    if !(fz > 0.0) {
        return Err(Error::Domain(format!("vertical load {fz} N must be positive")));
    }
    Ok(magic_formula(alpha, fz, &p.to_array()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axle {
    Front,
    Rear,
}

impl Axle {
    pub fn index(self) -> usize {
        match self {
            Axle::Front => 0,
            Axle::Rear => 1,
        }
    }

    pub const BOTH: [Axle; 2] = [Axle::Front, Axle::Rear];
}

/// Cartesian state `(u, v, r, x_G, y_G, psi)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl State {
    pub fn to_array(&self) -> [f64; 6] {
        [self.u, self.v, self.r, self.x, self.y, self.psi]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { u: a[0], v: a[1], r: a[2], x: a[3], y: a[4], psi: a[5] }
    }
}

/// Control input `(X2a, X2b, delta)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Input {
    /// Rear traction force, non-negative [N].
    pub x2a: f64,
    /// Total braking force, non-positive [N].
    pub x2b: f64,
    /// Road-wheel steering angle [rad].
    pub delta: f64,
}

impl Input {
    pub fn to_array(&self) -> [f64; 3] {
        [self.x2a, self.x2b, self.delta]
    }
}

/// Full vehicle: chassis plus front and rear axle characteristics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub chassis: VehicleParams,
    pub front: AxleTireParams,
    pub rear: AxleTireParams,
}

impl Default for Vehicle {
    fn default() -> Self {
        Self { chassis: VehicleParams::default(), front: AxleTireParams::FRONT, rear: AxleTireParams::REAR }
    }
}

/// Axle-level quantities at one operating point, index 0 = front, 1 = rear.
#[derive(Clone, Copy, Debug)]
pub struct AxleForces<T> {
    pub slip: [T; 2],
    pub x: [T; 2],
    pub y: [T; 2],
    pub z: [T; 2],
}

impl Vehicle {
    pub fn tires(&self, axle: Axle) -> &AxleTireParams {
        match axle {
            Axle::Front => &self.front,
            Axle::Rear => &self.rear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chassis.validate()?;
        self.front.validate()?;
        self.rear.validate()
    }

    pub fn static_loads(&self) -> [f64; 2] {
        let w = self.chassis.m * GRAVITY;
        [w * self.chassis.wd_front, w * (1.0 - self.chassis.wd_front)]
    }

    /// Quasi-static vertical loads; the longitudinal acceleration driving the
    /// transfer is the total tire longitudinal force divided by the mass.
    pub fn loads_generic<T: Scalar>(&self, x2a: T, x2b: T) -> [T; 2] {
        let c = &self.chassis;
        let [z1s, z2s] = self.static_loads();
        let transfer = (x2a + x2b) * (c.h_g / c.wheelbase);
        [-transfer + z1s, transfer + z2s]
    }

    pub fn axle_forces_generic<T: Scalar>(&self, u: T, v: T, r: T, input: [T; 3]) -> AxleForces<T> {
        let c = &self.chassis;
        let [x2a, x2b, delta] = input;
        let z = self.loads_generic(x2a, x2b);
        let slip = [delta - ((v + r * c.a1()) / u).atan(), -((v - r * c.a2()) / u).atan()];
        let pf = self.front.to_array().map(T::cst);
        let pr = self.rear.to_array().map(T::cst);
        let y = [magic_formula(slip[0], z[0], &pf), magic_formula(slip[1], z[1], &pr)];
        let x = [x2b * c.brake_balance_front, x2a + x2b * (1.0 - c.brake_balance_front)];
        AxleForces { slip, x, y, z }
    }

    /// Body-frame accelerations `(du/dt, dv/dt, dr/dt)`.
    pub fn body_rates_generic<T: Scalar>(&self, u: T, v: T, r: T, input: [T; 3]) -> [T; 3] {
        let c = &self.chassis;
        let f = self.axle_forces_generic(u, v, r, input);
        let (sd, cd) = (input[2].sin(), input[2].cos());
        // front axle forces rotate with the steered wheel
        let fx = f.x[0] * cd - f.y[0] * sd + f.x[1];
        let fy1 = f.x[0] * sd + f.y[0] * cd;
        let fy = fy1 + f.y[1];
        let mz = fy1 * c.a1() - f.y[1] * c.a2();
        [fx / c.m + v * r, fy / c.m - u * r, mz / c.i_z]
    }

    /// Time derivative of the Cartesian state.
    pub fn dynamics_generic<T: Scalar>(&self, x: [T; 6], input: [T; 3]) -> [T; 6] {
        let [u, v, r, _, _, psi] = x;
        let [du, dv, dr] = self.body_rates_generic(u, v, r, input);
        let (sp, cp) = (psi.sin(), psi.cos());
        [du, dv, dr, u * cp - v * sp, u * sp + v * cp, r]
    }

    /// Axle saturation ratios `S_1, S_2`.
    pub fn saturation_generic<T: Scalar>(&self, u: T, v: T, r: T, input: [T; 3]) -> [T; 2] {
        let f = self.axle_forces_generic(u, v, r, input);
        std::array::from_fn(|j| {
            let axle = Axle::BOTH[j];
            let mux = self.chassis.mu_x(axle);
            let muy = self.tires(axle).p_dy1;
            ((f.x[j] / mux).sq() + (f.y[j] / muy).sq()) / f.z[j].sq()
        })
    }

    fn check_speed(&self, u: f64) -> Result<()> {
        if !(u > 0.5) {
            return Err(Error::Domain(format!("longitudinal speed {u} m/s must exceed 0.5 m/s")));
        }
        Ok(())
    }

    pub fn vertical_loads(&self, input: &Input) -> Result<[f64; 2]> {
        let z = self.loads_generic(input.x2a, input.x2b);
        for (axle, &load) in z.iter().enumerate() {
            if load <= 0.0 {
                return Err(Error::WheelLift { axle: axle + 1, load });
            }
        }
        Ok(z)
    }

    pub fn axle_forces(&self, state: &State, input: &Input) -> Result<AxleForces<f64>> {
        self.check_speed(state.u)?;
        self.vertical_loads(input)?;
        Ok(self.axle_forces_generic(state.u, state.v, state.r, input.to_array()))
    }

    pub fn dynamics(&self, state: &State, input: &Input) -> Result<[f64; 6]> {
        self.check_speed(state.u)?;
        self.vertical_loads(input)?;
        Ok(self.dynamics_generic(state.to_array(), input.to_array()))
    }

    /// Exact state Jacobian `A = df/dx` of the Cartesian dynamics.
    pub fn jacobian_a(&self, state: &State, input: &Input) -> Result<Matrix6<f64>> {
        self.check_speed(state.u)?;
        self.vertical_loads(input)?;
        Ok(self.jacobian_unchecked(state, input))
    }

    pub(crate) fn jacobian_unchecked(&self, state: &State, input: &Input) -> Matrix6<f64> {
        let x = Dual::<6>::vars(&state.to_array());
        let inp = input.to_array().map(Dual::<6>::cst);
        let f = self.dynamics_generic(x, inp);
        Matrix6::from_fn(|i, j| f[i].g[j])
    }

    pub fn axle_saturation(&self, state: &State, input: &Input, axle: Axle) -> Result<f64> {
        self.check_speed(state.u)?;
        self.vertical_loads(input)?;
        Ok(self.saturation_generic(state.u, state.v, state.r, input.to_array())[axle.index()])
    }

    /// Exact gradient of `S_j` with respect to the Cartesian state.
    pub fn saturation_gradient(&self, state: &State, input: &Input, axle: Axle) -> Result<[f64; 6]> {
        self.check_speed(state.u)?;
        self.vertical_loads(input)?;
        let x = Dual::<6>::vars(&state.to_array());
        let inp = input.to_array().map(Dual::<6>::cst);
        let s = self.saturation_generic(x[0], x[1], x[2], inp)[axle.index()];
        Ok(s.g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_slip_zero_force() {
        for fz in [1000.0, 9000.0, 15000.0] {
            assert_eq!(axle_lateral_force(0.0, fz, &AxleTireParams::FRONT).unwrap(), 0.0);
        }
        assert!(axle_lateral_force(0.1, 0.0, &AxleTireParams::FRONT).is_err());
    }

    #[test]
    fn front_peak_force_at_nominal_load() {
        let p = AxleTireParams::FRONT;
        // the sine argument reaches pi/2 somewhere in (0, 0.5) rad
        let peak = (0..200_000)
            .map(|i| axle_lateral_force(i as f64 * 2.5e-6, p.fz0, &p).unwrap())
            .fold(0.0f64, f64::max);
        assert!((peak - 20442.5).abs() < 1e-3, "{peak}");
    }

    #[test]
    fn static_loads_and_transfer() {
        let veh = Vehicle::default();
        let z = veh.vertical_loads(&Input::default()).unwrap();
        assert!((z[0] - 9748.6875).abs() < 1e-9);
        assert!((z[1] - 8645.0625).abs() < 1e-9);
        let mg = veh.chassis.m * GRAVITY;
        let z_acc = veh.vertical_loads(&Input { x2a: mg, x2b: 0.0, delta: 0.0 }).unwrap();
        assert!((z[0] - z_acc[0] - 3096.59).abs() < 0.01);
        assert!((z_acc[0] + z_acc[1] - mg).abs() < 1e-9);
        let lift = veh.vertical_loads(&Input { x2a: 1e6, x2b: 0.0, delta: 0.0 });
        assert!(matches!(lift, Err(Error::WheelLift { axle: 1, .. })));
    }

    #[test]
    fn straight_running_equilibrium() {
        let veh = Vehicle::default();
        let s = State { u: 30.0, ..Default::default() };
        let d = veh.dynamics(&s, &Input::default()).unwrap();
        assert_eq!(&d[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(d[3], 30.0);
    }

    #[test]
    fn pure_braking() {
        let veh = Vehicle::default();
        let s = State { u: 50.0, ..Default::default() };
        let d = veh.dynamics(&s, &Input { x2a: 0.0, x2b: -10000.0, delta: 0.0 }).unwrap();
        assert!((d[0] + 10000.0 / 1875.0).abs() < 1e-12);
        assert!(veh.dynamics(&State { u: 0.4, ..s }, &Input::default()).is_err());
    }

    #[test]
    fn steady_state_cornering_root() {
        // Newton on (v, r) with a finite-difference Jacobian
        let veh = Vehicle::default();
        let inp = Input { x2a: 0.0, x2b: 0.0, delta: 0.02 };
        let (mut v, mut r) = (0.0, 0.0);
        let rates = |v: f64, r: f64| {
            let d = veh.dynamics(&State { u: 20.0, v, r, ..Default::default() }, &inp).unwrap();
            [d[1], d[2]]
        };
        for _ in 0..50 {
            let f = rates(v, r);
            let h = 1e-7;
            let fv = rates(v + h, r);
            let fr = rates(v, r + h);
            let j = [[(fv[0] - f[0]) / h, (fr[0] - f[0]) / h], [(fv[1] - f[1]) / h, (fr[1] - f[1]) / h]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            v -= (j[1][1] * f[0] - j[0][1] * f[1]) / det;
            r -= (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        }
        let f = rates(v, r);
        assert!(f[0].abs() < 1e-9 && f[1].abs() < 1e-9);
        let d = veh.dynamics(&State { u: 20.0, v, r, ..Default::default() }, &inp).unwrap();
        let ay = d[1] + 20.0 * r;
        assert!((ay - 20.0 * r).abs() < 1e-6);
        assert!(r > 0.0);
    }

    #[test]
    fn kinematic_rows_and_planar_invariance() {
        let veh = Vehicle::default();
        let s = State { u: 25.0, v: 0.0, r: 0.0, x: 3.0, y: -2.0, psi: 0.4 };
        let a = veh.jacobian_a(&s, &Input::default()).unwrap();
        assert!((a[(3, 0)] - 0.4f64.cos()).abs() < 1e-15);
        assert_eq!(a[(5, 2)], 1.0);
        assert_eq!(a[(2, 3)], 0.0);
        assert_eq!(a[(2, 4)], 0.0);
        assert_eq!(a[(2, 5)], 0.0);
    }

    #[test]
    fn saturation_endpoints() {
        let veh = Vehicle::default();
        // X = Y = 0
        let s = State { u: 20.0, ..Default::default() };
        let sat = veh.axle_saturation(&s, &Input::default(), Axle::Front).unwrap();
        assert_eq!(sat, 0.0);
        // MF peak at F_z = F_z0 gives S = 1
        let p = AxleTireParams::FRONT;
        let peak = p.p_dy1 * p.fz0;
        let y = (0..200_000)
            .map(|i| magic_formula(i as f64 * 2.5e-6, p.fz0, &p.to_array()))
            .fold(0.0f64, f64::max);
        let s_peak = (y / p.p_dy1).powi(2) / p.fz0.powi(2);
        assert!((s_peak - 1.0).abs() < 1e-9, "{s_peak}");
        assert!((y - peak).abs() < 1e-3);
    }

    #[test]
    fn saturation_scaling() {
        // scaling chassis mass scales X, Z and (through F_z) Y; with F_z0 scaled
        // too the saturation ratio is unchanged
        let base = Vehicle::default();
        let s = State { u: 22.0, v: 0.4, r: 0.3, ..Default::default() };
        let inp = Input { x2a: 2000.0, x2b: 0.0, delta: 0.05 };
        for lam in [0.5, 2.0] {
            let mut v = base;
            v.chassis.m *= lam;
            v.chassis.i_z *= lam;
            v.front.fz0 *= lam;
            v.rear.fz0 *= lam;
            let inp_l = Input { x2a: inp.x2a * lam, ..inp };
            for axle in Axle::BOTH {
                let s0 = base.axle_saturation(&s, &inp, axle).unwrap();
                let s1 = v.axle_saturation(&s, &inp_l, axle).unwrap();
                assert!((s0 - s1).abs() < 1e-12 * s0.max(1.0));
            }
        }
    }

    #[test]
    fn smooth_on_feasible_domain() {
        let veh = Vehicle::default();
        for iu in 0..=20 {
            for iv in -3..=3 {
                for ir in -4..=4 {
                    for id in -2..=2 {
                        let s = State {
                            u: 1.0 + iu as f64 * 4.95,
                            v: iv as f64 * 5.0,
                            r: ir as f64 * 0.5,
                            ..Default::default()
                        };
                        let inp = Input { x2a: 0.0, x2b: 0.0, delta: id as f64 * 0.175 };
                        let d = veh.dynamics(&s, &inp).unwrap();
                        assert!(d.iter().all(|x| x.is_finite()));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lateral_force_odd_and_bounded(alpha in -0.6f64..0.6, fz in 2000.0f64..16000.0) {
            for p in [AxleTireParams::FRONT, AxleTireParams::REAR] {
                let f = axle_lateral_force(alpha, fz, &p).unwrap();
                let g = axle_lateral_force(-alpha, fz, &p).unwrap();
                prop_assert!((f + g).abs() < 1e-9 * f.abs().max(1.0));
                let d = (p.p_dy1 + p.p_dy2 * (fz - p.fz0) / p.fz0) * fz;
                prop_assert!(f.abs() <= d.abs() * (1.0 + 1e-12));
            }
        }

        #[test]
        fn loads_sum_to_weight(x2a in 0.0f64..9000.0, x2b in -30000.0f64..0.0) {
            let veh = Vehicle::default();
            let z = veh.loads_generic(x2a, x2b);
            prop_assert!((z[0] + z[1] - veh.chassis.m * GRAVITY).abs() < 1e-8);
        }
    }
}
