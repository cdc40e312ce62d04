//! Full lab-Hamiltonian swaps against the Bessel law.

use fockcage::device::DriveParams;
use fockcage::dynamics::{time_grid, Tolerances};
use fockcage::floquet::{bessel_j, SwapExperiment, Transition};

const OMEGA1_GHZ: f64 = 4.736;
const U1: f64 = -221.7;
const U2: f64 = -207.0;

fn doubly_occupied_channel() -> SwapExperiment {
    SwapExperiment::resonant(3.0, OMEGA1_GHZ, -400.0, U1, U2, Transition::OneOneZeroTwo, -1, 1.0).unwrap()
}

#[test]
fn two_photon_channel_follows_bessel_law() {
    let base = doubly_occupied_channel();
    for ratio in [0.6, 1.8, 3.0] {
        let m = base.with_ratio(ratio).measure(0.001, Tolerances::long_horizon()).unwrap();
        assert!(m.agrees(), "{m:?}");
        assert!(m.max_transfer > 0.99, "{m:?}");
    }
}

#[test]
fn single_photon_channel_follows_bessel_law() {
    let base = SwapExperiment::resonant(3.0, OMEGA1_GHZ, -178.3, U1, U2, Transition::OneZero, -1, 1.0).unwrap();
    for ratio in [0.5, 1.5, 2.5, 3.5] {
        let m = base.with_ratio(ratio).measure(0.001, Tolerances::long_horizon()).unwrap();
        let predicted = 3.0 * bessel_j(1, ratio).abs();
        assert!((m.predicted_mhz - predicted).abs() < 1e-12);
        assert!(m.agrees(), "{m:?}");
    }
}

#[test]
fn swap_is_suppressed_at_a_bessel_node() {
    // Static resonance (n = 0) dressed by J₀(Ω/ω_p); the first zero of J₀
    // switches the channel off.
    let node = 2.404_825_557_695_773;
    let exp = SwapExperiment {
        g_mhz: 3.0,
        omega1_ghz: OMEGA1_GHZ,
        delta_12_mhz: U1,
        u1_mhz: U1,
        u2_mhz: U2,
        transition: Transition::OneOneZeroTwo,
        drive: DriveParams {
            amplitude_mhz: node * 150.0,
            frequency_mhz: 150.0,
            phase_rad: 0.0,
            sideband: 0,
        },
    };
    assert!(exp.predicted_mhz().unwrap() < 1e-12);
    let times = time_grid(1.0, 0.001).unwrap();
    let (traj, target) = exp.simulate(&times, Tolerances::default()).unwrap();
    let max_transfer = traj.populations().iter().map(|p| p[target]).fold(0.0, f64::max);
    assert!(max_transfer <= 0.05, "max transfer {max_transfer}");

    let undriven = SwapExperiment {
        drive: DriveParams { amplitude_mhz: 0.0, ..exp.drive },
        ..exp.clone()
    };
    let (traj, target) = undriven.simulate(&times, Tolerances::default()).unwrap();
    let max_transfer = traj.populations().iter().map(|p| p[target]).fold(0.0, f64::max);
    assert!(max_transfer > 0.95, "undriven swap reaches only {max_transfer}");
}

#[test]
fn resonant_drive_needs_a_nonzero_sideband() {
    assert!(SwapExperiment::resonant(3.0, OMEGA1_GHZ, -400.0, U1, U2, Transition::OneOneZeroTwo, 0, 1.0).is_err());
    assert!(SwapExperiment::resonant(3.0, OMEGA1_GHZ, -400.0, U1, U2, Transition::OneOneZeroTwo, 1, 1.0).is_err());
}
