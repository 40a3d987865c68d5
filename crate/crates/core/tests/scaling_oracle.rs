//! Laboratory-to-scaled parameter maps against values computed independently
//! at 40 significant digits from the same CODATA 2018 constants.
#![allow(clippy::excessive_precision)]

use approx::assert_relative_eq;
use carlfel::scaling::{carl_scaling, fel_scaling, CarlPhysicalParams, FelPhysicalParams, PhysicalConstants};

const TOL: f64 = 1e-12;

fn fel() -> FelPhysicalParams {
    FelPhysicalParams { lambda_w: 0.02, a_w: 1.0, gamma0: 150.0, density_n: 1e16, lambda_r: 1e-6 }
}

fn carl() -> CarlPhysicalParams {
    CarlPhysicalParams {
        rabi_omega: 1e7,
        detuning_pump: 1e9,
        gamma_decay: 3.8e7,
        dipole_d: 3.584e-29,
        omega: 2.4141e15,
        omega_p: 2.4141e15 + 2e5,
        density_n: 1e18,
    }
}

#[test]
fn fel_intermediates() {
    let s = fel_scaling(&fel(), &PhysicalConstants::electron()).unwrap();
    assert_relative_eq!(s.gamma_r, 141.421_356_237_309_509_55, max_relative = TOL);
    assert_relative_eq!(s.q, 58_286_592.567_288_161_257, max_relative = TOL);
    assert_relative_eq!(s.rho_f, 4.295_947_627_592_607_648_3e-4, max_relative = TOL);
    assert_relative_eq!(s.params.rho_bar, 25_039.614_905_989_849_472, max_relative = TOL);
    assert_relative_eq!(s.params.delta, 3_535_674.717_592_152_433_3, max_relative = TOL);
}

#[test]
fn carl_intermediates() {
    let s = carl_scaling(&carl(), &PhysicalConstants::rubidium87()).unwrap();
    assert_relative_eq!(s.omega_r, 94_767.737_055_565_106_575, max_relative = TOL);
    assert_relative_eq!(s.s0, 0.004_992_291_901_304_386_028, max_relative = TOL);
    assert_relative_eq!(s.rho_c, 166.407_066_306_103_754_64, max_relative = TOL);
    assert_eq!(s.params.rho_bar, s.rho_c);
    assert_relative_eq!(s.params.delta, 2.110_422_874_007_576_313_5, max_relative = TOL);
}

#[test]
fn rho_bar_scales_as_cube_root_of_density() {
    let e = PhysicalConstants::electron();
    let a = fel_scaling(&fel(), &e).unwrap().params.rho_bar;
    let b = fel_scaling(&FelPhysicalParams { density_n: 8e16, ..fel() }, &e).unwrap().params.rho_bar;
    assert_relative_eq!(b / a, 2.0, max_relative = TOL);

    let rb = PhysicalConstants::rubidium87();
    let a = carl_scaling(&carl(), &rb).unwrap().params.rho_bar;
    let b = carl_scaling(&CarlPhysicalParams { density_n: 8e18, ..carl() }, &rb).unwrap().params.rho_bar;
    assert_relative_eq!(b / a, 2.0, max_relative = TOL);
}

#[test]
fn detuning_signs() {
    let rb = PhysicalConstants::rubidium87();
    let below = CarlPhysicalParams { omega_p: 2.4141e15 - 2e5, ..carl() };
    assert!(carl_scaling(&below, &rb).unwrap().params.delta < 0.0);
    let e = PhysicalConstants::electron();
    let slow = FelPhysicalParams { gamma0: 140.0, ..fel() };
    assert!(fel_scaling(&slow, &e).unwrap().params.delta < 0.0);
}
