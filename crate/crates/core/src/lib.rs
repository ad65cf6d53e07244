//! Numerical laboratory for site-resolved particle current in small
//! driven-dissipative Bose-Hubbard lattices.
//!
//! The crate covers the full pipeline from operator construction to
//! measurement post-processing:
//!
//! - [`fockspace`]: composite Fock bases and sparse ladder/number operators
//!   for lattice sites and bath resonators.
//! - [`model`]: static, driven, and bath-coupled Hamiltonians plus Lindblad
//!   collapse operators, with all rates in angular frequency (rad/µs).
//! - [`dynamics`]: Schrödinger and Lindblad propagation under time-dependent
//!   Hamiltonians with an adaptive Runge-Kutta driver.
//! - [`spectrum`]: particle-number-manifold diagonalization, driven many-body
//!   spectra versus drive detuning, and transition-frequency markers.
//! - [`measurement`]: the bond current operator, the beamsplitter measurement
//!   protocol with its independent spectral-projection oracle, current
//!   statistics, manifold-resolved currents, and readout-error correction.
//! - [`fluxcomp`]: flux-pulse distortion compensation (step response →
//!   frequency response → inverse kernel → pre-compensated waveforms),
//!   including time-dependent crosstalk and net-zero balancing.
//! - [`presets`]: ready-made parameter sets for the bundled experiments.

pub mod dynamics;
pub mod fluxcomp;
pub mod fockspace;
pub mod measurement;
pub mod model;
pub mod presets;
pub mod spectrum;
pub mod units;
