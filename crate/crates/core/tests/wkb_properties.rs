use num_complex::Complex64;
use wkb_core::field::mass_outside_real;
use wkb_core::flow::{integrate_flow, AffineFlow, ZeroPhase, DEFAULT_J_MIN};
use wkb_core::nls::{evolve, NlsParams, PotentialSpec};
use wkb_core::norms::{linf, mass};
use wkb_core::spectral::{spectral_gradient_real, translate};
use wkb_core::wkb::{
    accuracy_sweep, assemble_wkb, pull_back, solve_corrector1, solve_grenier, solve_limit_system, solve_with_corrector,
    MolOptions, WkbOrder,
};
use wkb_core::{bump, make_grid, mass_outside, ComplexField, RealField, SupportBox};

fn bump_profile_derivative(s: f64) -> f64 {
    // d/dr exp(-1 / (1 - r^2)) at r = s
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        (-1.0 / q).exp() * (-2.0 * s / (q * q))
    }
}

#[test]
fn pressureless_phase_follows_burgers_characteristics() {
    // with a = 0 the velocity v = phi_x solves v_t + v v_x = 0
    let g = make_grid(1, 1024, 4.0).unwrap();
    let (r, h) = (2.0, 0.8);
    let phi0 = bump(&g, &[0.0], r, h).unwrap();
    let v0 = |y: f64| h / r * bump_profile_derivative(y / r);
    let t = 0.5;
    let s = solve_limit_system(&phi0, &ComplexField::zeros(g), &PotentialSpec::Zero, &[t], MolOptions::new(2e-3))
        .unwrap();
    let v = spectral_gradient_real(&s.states[0].phi).remove(0);
    for i in 0..g.len() {
        let x = g.coord(i);
        // invert y + t v0(y) = x by Newton from y = x
        let mut y = x;
        for _ in 0..50 {
            let dv = (v0(y + 1e-6) - v0(y - 1e-6)) / 2e-6;
            let step = (y + t * v0(y) - x) / (1.0 + t * dv);
            y -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        assert!((v.data()[i] - v0(y)).abs() <= 1e-6, "x = {x}");
    }
}

#[test]
fn real_data_stays_real() {
    let g = make_grid(1, 256, 4.0).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 2.0).unwrap().to_complex();
    let s = solve_limit_system(&RealField::zeros(g), &a0, &PotentialSpec::Zero, &[0.3], MolOptions::new(1e-3))
        .unwrap();
    let im = s.states[0].amp.imag();
    assert!(im.data().iter().all(|v| v.abs() <= 1e-10));
}

#[test]
fn limit_system_conserves_amplitude_mass() {
    let g = make_grid(2, 64, 3.0).unwrap();
    let phi0 = bump(&g, &[0.2, -0.1], 1.5, 0.6).unwrap();
    let a0 = bump(&g, &[0.0, 0.0], 1.5, 2.0).unwrap().to_complex();
    let times = [0.0, 0.1, 0.2, 0.3];
    let s = solve_limit_system(&phi0, &a0, &PotentialSpec::Zero, &times, MolOptions::new(2e-3)).unwrap();
    let m0 = mass(&a0);
    for st in &s.states {
        assert!((mass(&st.amp) / m0 - 1.0).abs() <= 1e-6 * (1.0 + st.t), "t = {}", st.t);
    }
    for sym in s.symmetrized() {
        assert!(sym.curl_residual() <= 1e-12);
    }
}

#[test]
fn disjoint_modes_superpose() {
    let g = make_grid(1, 512, 6.0).unwrap();
    let p1 = bump(&g, &[-3.0], 1.5, 0.3).unwrap();
    let a1 = bump(&g, &[-3.0], 1.5, 1.5).unwrap().to_complex();
    let p2 = bump(&g, &[3.0], 1.5, -0.25).unwrap();
    let a2 = bump(&g, &[3.0], 1.5, 1.0).unwrap().to_complex();
    let times = [0.2, 0.4];
    let opts = MolOptions::new(2e-3);
    let s1 = solve_limit_system(&p1, &a1, &PotentialSpec::Zero, &times, opts).unwrap();
    let s2 = solve_limit_system(&p2, &a2, &PotentialSpec::Zero, &times, opts).unwrap();
    let both =
        solve_limit_system(&p1.add(&p2).unwrap(), &a1.add(&a2).unwrap(), &PotentialSpec::Zero, &times, opts).unwrap();
    for k in 0..times.len() {
        let phi = s1.states[k].phi.add(&s2.states[k].phi).unwrap();
        let amp = s1.states[k].amp.add(&s2.states[k].amp).unwrap();
        assert!(linf(&phi.sub(&both.states[k].phi).unwrap().to_complex()) <= 1e-8);
        assert!(linf(&amp.sub(&both.states[k].amp).unwrap()) <= 1e-8);
    }
}

#[test]
fn supports_do_not_move_without_potential() {
    // the dispersive source Δa has a heavy spectral tail; 1024 points keep it off the band
    let g = make_grid(1, 1024, 6.0).unwrap();
    let support = SupportBox::cube(&[1.0], 1.0).unwrap();
    let phi0 = bump(&g, &[1.0], 1.0, 0.5).unwrap();
    let a0 = bump(&g, &[1.0], 1.0, 1.5).unwrap().to_complex();
    let s = solve_with_corrector(&phi0, &a0, &PotentialSpec::Zero, &[0.1, 0.3], MolOptions::new(2e-3)).unwrap();
    for st in &s.states {
        assert!(mass_outside_real(&st.phi, &support) <= 1e-6);
        assert!(mass_outside(&st.amp, &support) <= 1e-6);
        assert!(mass_outside_real(st.phi1.as_ref().unwrap(), &support) <= 1e-6);
        assert!(mass_outside(st.amp1.as_ref().unwrap(), &support) <= 1e-6);
    }
}

#[test]
fn corrector_vanishes_with_zero_background_amplitude() {
    let g = make_grid(1, 256, 4.0).unwrap();
    let phi0 = bump(&g, &[0.0], 1.5, 0.5).unwrap();
    let s = solve_with_corrector(&phi0, &ComplexField::zeros(g), &PotentialSpec::Zero, &[0.3], MolOptions::new(1e-3))
        .unwrap();
    let st = &s.states[0];
    assert!(st.phi1.as_ref().unwrap().data().iter().all(|v| v.abs() <= 1e-14));
    assert!(linf(st.amp1.as_ref().unwrap()) <= 1e-14);
}

#[test]
fn corrector_starts_with_the_dispersive_source() {
    // a1(t) = t (i/2) Δa0 + O(t^2): the source alone drives the corrector at first
    let g = make_grid(1, 256, 4.0).unwrap();
    let phi0 = bump(&g, &[0.0], 1.5, 0.5).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 2.0).unwrap().to_complex();
    let lap = wkb_core::spectral::spectral_laplacian(&a0);
    let mut errs = Vec::new();
    for t in [0.02, 0.01] {
        let s = solve_with_corrector(&phi0, &a0, &PotentialSpec::Zero, &[t], MolOptions::new(1e-3)).unwrap();
        let a1 = s.states[0].amp1.clone().unwrap();
        let guess = lap.scale_complex(Complex64::new(0.0, 0.5 * t));
        errs.push(linf(&a1.sub(&guess).unwrap()));
    }
    let ratio = errs[0] / errs[1];
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn corrector_matches_joint_integration() {
    let g = make_grid(1, 128, 4.0).unwrap();
    let phi0 = bump(&g, &[0.0], 1.5, 0.5).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 1.0).unwrap().to_complex();
    let times = [0.0, 0.1, 0.2];
    let opts = MolOptions::new(1e-3);
    let limit = solve_limit_system(&phi0, &a0, &PotentialSpec::Zero, &times, opts).unwrap();
    let corr = solve_corrector1(&limit, &PotentialSpec::Zero, opts).unwrap();
    for (l, c) in limit.states.iter().zip(&corr.states) {
        assert_eq!(l.phi, c.phi);
        assert!(c.amp1.is_some());
    }
}

#[test]
fn time_stepping_is_fourth_order() {
    // coarse grid and small eps keep the unfiltered RK4 well inside its stability region
    let g = make_grid(1, 64, 4.0).unwrap();
    let phi0 = bump(&g, &[0.0], 2.0, 0.8).unwrap();
    let a0 = bump(&g, &[0.0], 2.0, 1.5).unwrap().to_complex();
    let run = |dt: f64| {
        let mut o = MolOptions::new(dt);
        o.filter = None;
        solve_grenier(&phi0, &a0, 0.05, &PotentialSpec::Zero, &[0.4], o).unwrap().states.remove(0).amp
    };
    let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
    let ratio = linf(&a.sub(&b).unwrap()) / linf(&b.sub(&c).unwrap());
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn grenier_reconstruction_matches_split_step() {
    let g = make_grid(1, 512, 4.0).unwrap();
    let eps = 1.0 / 16.0;
    let t = 0.2;
    let phi0 = bump(&g, &[0.0], 2.0, 1.5).unwrap();
    let a0 = bump(&g, &[0.0], 2.0, 2.5).unwrap().to_complex();
    let s = solve_grenier(&phi0, &a0, eps, &PotentialSpec::Zero, &[t], MolOptions::new(2.5e-4)).unwrap();
    let w = assemble_wkb(&s.states[0], eps, None, WkbOrder::Leading).unwrap();
    let u0 = assemble_wkb(&solve_grenier(&phi0, &a0, eps, &PotentialSpec::Zero, &[0.0], MolOptions::new(1e-3))
        .unwrap()
        .states[0], eps, None, WkbOrder::Leading)
    .unwrap();
    let p = NlsParams::new(eps, 0, PotentialSpec::Zero, t, &g).with_dt(eps / 400.0);
    let u = evolve(&u0, &p, &[t]).unwrap().remove(0).field;
    let err = linf(&u.sub(&w).unwrap());
    assert!(err <= 1e-4, "error {err}");
}

#[test]
fn linear_potential_grenier_matches_free_translate() {
    // with V = -E x the eikonal splitting reproduces the Avron-Herbst picture
    let g = make_grid(1, 512, 6.0).unwrap();
    let eps = 1.0 / 16.0;
    let (e, t) = (1.0, 0.3);
    let phi0 = bump(&g, &[0.0], 2.0, 1.0).unwrap();
    let a0 = bump(&g, &[0.0], 2.0, 2.0).unwrap().to_complex();
    let opts = MolOptions::new(5e-4);
    let pot = PotentialSpec::Linear { e: vec![e] };
    let s = solve_grenier(&phi0, &a0, eps, &pot, &[t], opts).unwrap();
    let snap = AffineFlow::new(&pot, 1, t, 1e-3, DEFAULT_J_MIN).unwrap().at(t).unwrap();
    let w = assemble_wkb(&s.states[0], eps, Some(&snap), WkbOrder::Leading).unwrap();
    let free = solve_grenier(&phi0, &a0, eps, &PotentialSpec::Zero, &[t], opts).unwrap();
    let v = assemble_wkb(&free.states[0], eps, None, WkbOrder::Leading).unwrap();
    // v(t, x) = u(t, x - t^2 E / 2) exp(i (t E x - t^3 E^2 / 3) / eps)
    let shifted = translate(&w, &[0.5 * t * t * e]);
    let transformed = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, (t * e * x[0] - t.powi(3) * e * e / 3.0) / eps))
        .zip_with(&shifted, |a, b| a * b)
        .unwrap();
    let err = linf(&transformed.sub(&v).unwrap());
    assert!(err <= 1e-3, "error {err}");
}

#[test]
fn pull_back_with_harmonic_flow() {
    // at t = 0 the pull-back is the identity; later sqrt(J) rescales the amplitude
    let g = make_grid(1, 128, 4.0).unwrap();
    let pot = PotentialSpec::Harmonic { omega: 1.0, attractive: true };
    let phi0 = bump(&g, &[0.0], 1.5, 0.3).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 1.0).unwrap().to_complex();
    let times = [0.0, 0.4];
    let s = solve_limit_system(&phi0, &a0, &pot, &times, MolOptions::new(1e-3)).unwrap();
    let bundle = integrate_flow(&pot, &ZeroPhase, &g, &times, 1e-3, DEFAULT_J_MIN).unwrap();
    let p0 = pull_back(&s.states[0], &bundle).unwrap();
    assert!(linf(&p0.amp.sub(&a0).unwrap()) <= 1e-10);
    let p1 = pull_back(&s.states[1], &bundle).unwrap();
    // the pulled-back amplitude mass is the mass of a(t) on the image of the grid box
    let ratio = mass(&p1.amp) / mass(&s.states[1].amp);
    assert!((ratio - 1.0).abs() <= 1e-3, "ratio {ratio}");
    let late = wkb_core::wkb::WkbState { t: 2.0, ..s.states[1].clone() };
    assert!(pull_back(&late, &bundle).is_err());
}

#[test]
fn real_part_of_corrector_grows_quadratically() {
    // with phi0 = 0 and real a0 the source (i/2) Δa0 is purely imaginary
    let g = make_grid(1, 256, 4.0).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 2.0).unwrap().to_complex();
    let re_at = |t: f64| {
        let s = solve_with_corrector(&RealField::zeros(g), &a0, &PotentialSpec::Zero, &[t], MolOptions::new(5e-4))
            .unwrap();
        let a1 = s.states[0].amp1.clone().unwrap();
        a1.real().data().iter().map(|v| v.abs()).fold(0.0, f64::max)
    };
    let ratio = re_at(0.04) / re_at(0.02);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linear_potential_pull_back_is_a_translation() {
    let g = make_grid(1, 256, 6.0).unwrap();
    let e = 1.2;
    let pot = PotentialSpec::Linear { e: vec![e] };
    let phi0 = bump(&g, &[0.0], 1.5, 0.3).unwrap();
    let a0 = bump(&g, &[0.0], 1.5, 1.0).unwrap().to_complex();
    let times = [0.0, 0.5];
    let s = solve_limit_system(&phi0, &a0, &pot, &times, MolOptions::new(1e-3)).unwrap();
    let bundle = integrate_flow(&pot, &ZeroPhase, &g, &times, 1e-3, DEFAULT_J_MIN).unwrap();
    let back = pull_back(&s.states[1], &bundle).unwrap();
    // x(t, y) = y - t^2 E / 2, so the pull-back shifts by +t^2 E / 2
    let shifted = translate(&s.states[1].amp, &[0.5 * 0.25 * e]);
    assert!(linf(&back.amp.sub(&shifted).unwrap()) <= 1e-10);
    // in launch coordinates the support does not move
    let support = SupportBox::cube(&[0.0], 1.5).unwrap();
    assert!(mass_outside(&back.amp, &support) <= 1e-6);
}

#[test]
fn diagnostics_csv_has_one_row_per_sample() {
    let g = make_grid(2, 64, 3.0).unwrap();
    let phi0 = bump(&g, &[0.0, 0.0], 1.5, 0.3).unwrap();
    let a0 = bump(&g, &[0.0, 0.0], 1.5, 1.0).unwrap().to_complex();
    let s = solve_limit_system(&phi0, &a0, &PotentialSpec::Zero, &[0.0, 0.05, 0.1], MolOptions::new(5e-3)).unwrap();
    let mut out = Vec::new();
    s.write_diagnostics_csv(Some(&SupportBox::cube(&[0.0, 0.0], 1.5).unwrap()), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,grad_v_inf,band_fraction,support_leak,curl_residual");
    assert_eq!(lines.len(), 4);
    let curl: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
    assert!(curl <= 1e-8);
}

#[test]
fn first_order_wave_is_order_eps_accurate() {
    let g = make_grid(1, 512, 4.0).unwrap();
    let phi0 = bump(&g, &[0.0], 2.0, 1.5).unwrap();
    let a0 = bump(&g, &[0.0], 2.0, 2.5).unwrap().to_complex();
    let r = accuracy_sweep(&phi0, &a0, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], 0.2, 4, MolOptions::new(1e-3)).unwrap();
    assert!(r.entries.iter().all(|e| e.failure.is_none() && e.mass_drift <= 1e-10));
    let slope = r.slope().unwrap();
    assert!((0.8..=1.3).contains(&slope), "slope {slope}");
}
