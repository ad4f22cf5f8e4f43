//! Radial simulation of the linearized cutoff Boltzmann equation with soft
//! potentials, started from the uniform law on the unit circle.

pub mod cross_section;
pub mod diagnostics;
pub mod geometry;
pub mod kernel_integrals;
pub mod quadrature;
pub mod radial_measure;
pub mod scalar;
pub mod solver_det;
pub mod solver_mc;

pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Params = geometry::ModelParams<f64>;
pub type CrossSection = cross_section::AngularCrossSection<f64>;
pub type Grid = radial_measure::RadialGrid<f64>;
pub type Measure = radial_measure::RadialMeasure<f64>;
pub type Generator = solver_det::GeneratorMatrix<f64>;
pub type Trajectory = solver_det::Trajectory<f64>;

pub type Params32 = geometry::ModelParams<f32>;
pub type CrossSection32 = cross_section::AngularCrossSection<f32>;
pub type Grid32 = radial_measure::RadialGrid<f32>;
pub type Measure32 = radial_measure::RadialMeasure<f32>;
