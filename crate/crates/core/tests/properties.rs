use std::f64::consts::PI;

use lnakit::analytic::*;
use lnakit::circuit::*;
use lnakit::design::*;
use lnakit::mna::{assemble, AcSystem};
use lnakit::netlist::{parse_netlist, write_netlist};
use lnakit::noise::*;
use lnakit::polezero::*;
use lnakit::sweep::*;
use lnakit::topology::*;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

/// (kind, log10 of a scale factor); kind 0 = R, 1 = L, 2 = C.
type Element = (u8, f64);

fn element() -> impl Strategy<Value = Element> {
    (0u8..3, -1.0f64..1.0)
}

fn ladder(series: &[Element], shunt: &[Element]) -> Circuit {
    let mut c = Circuit::new("ladder");
    let n = series.len();
    let node = |i: usize| format!("n{i}");
    let add = |c: &mut Circuit, tag: String, a: &str, b: &str, (kind, x): Element| {
        let k = 10f64.powf(x);
        let label = format!("{}{tag}", ['R', 'L', 'C'][kind as usize]);
        match kind {
            0 => c.resistor(&label, a, b, 50.0 * k),
            1 => c.inductor(&label, a, b, 1e-9 * k),
            _ => c.capacitor(&label, a, b, 1e-12 * k),
        };
    };
    for i in 0..n {
        add(&mut c, format!("S{i}"), &node(i), &node(i + 1), series[i]);
        add(&mut c, format!("P{i}"), &node(i + 1), "0", shunt[i]);
    }
    c.port(&node(0), "0", 50.0).port(&node(n), "0", 50.0);
    c
}

fn ladders() -> impl Strategy<Value = Circuit> {
    (1usize..4).prop_flat_map(|n| {
        (prop::collection::vec(element(), n), prop::collection::vec(element(), n)).prop_map(|(a, b)| ladder(&a, &b))
    })
}

fn device() -> impl Strategy<Value = HybridPiParams> {
    (0.3e-3f64..10e-3, 5e9f64..60e9, 1.0f64..40.0, 50.0f64..300.0)
        .prop_map(|(ic, ft, rb, beta)| HybridPiParams::from_bias_ft(ic, DEFAULT_TEMPERATURE, beta, rb, ft, 15e-15).unwrap())
}

fn ce_stage(p: HybridPiParams, le: f64, rc: f64) -> Circuit {
    let mut c = Circuit::new("ce");
    c.bjt("Q1", "npn", "in", "out", "e", p)
        .inductor("LE", "e", "0", le)
        .resistor("RC", "out", "0", rc)
        .port("in", "0", 50.0)
        .port("out", "0", 50.0);
    c
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn netlist_round_trip_is_fixed_point(c in ladders(), p in device(), le in 0.05e-9f64..2e-9) {
        let mut full = c.clone();
        full.bjt("Q9", "npn", "n0", "q", "qe", p).inductor("LQ", "qe", "0", le).resistor("RQ", "q", "0", 75.0);
        for ckt in [full.clone(), expand_devices(&full)] {
            let text = write_netlist(&ckt);
            let again = write_netlist(&parse_netlist(&text).unwrap());
            prop_assert_eq!(&again, &text);
        }
    }

    #[test]
    fn expansion_idempotent_with_one_vccs_per_device(p in device(), q in device()) {
        let mut c = ce_stage(p, 0.3e-9, 100.0);
        c.bjt("Q2", "npn", "out", "o2", "0", q).resistor("R2", "o2", "0", 50.0);
        let x = expand_devices(&c);
        prop_assert_eq!(&expand_devices(&x), &x);
        prop_assert_eq!(&x.ports, &c.ports);
        for (label, dev) in [("Q1", p), ("Q2", q)] {
            let g: Vec<f64> = x.components.iter()
                .filter(|k| k.label.ends_with(&format!(".{label}")) && matches!(k.kind, ComponentKind::Vccs { .. }))
                .map(|k| k.kind.value().unwrap())
                .collect();
            prop_assert_eq!(g, vec![dev.gm]);
        }
    }

    #[test]
    fn gm_monotone(ic in 1e-6f64..0.1, k in 1.001f64..3.0, t in 200.0f64..450.0) {
        prop_assert!(gm_from_bias(ic * k, t).unwrap() > gm_from_bias(ic, t).unwrap());
        prop_assert!(gm_from_bias(ic, t * k).unwrap() < gm_from_bias(ic, t).unwrap());
    }

    #[test]
    fn solve_residual_gate(c in ladders(), f in 1e8f64..2e10) {
        let x = expand_devices(&c);
        let p = assemble(&x).unwrap();
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let sys = AcSystem::at(&p, s).unwrap();
        let b: DVector<Complex64> = DVector::from_fn(p.dim(), |i, _| Complex64::new(1.0 + i as f64, -0.5));
        let sol = sys.solve(&b).unwrap();
        prop_assert!((sys.matrix() * &sol - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn passive_reciprocal_two_ports(c in ladders()) {
        let grid = FrequencyGrid::log(1e8, 2e10, 15).unwrap();
        let s = two_port_sparams(&c, &grid).unwrap();
        let lossless = !c.components.iter().any(|k| matches!(k.kind, ComponentKind::Resistor { .. }));
        for m in &s.s {
            prop_assert!((m[0][1] - m[1][0]).norm() <= 1e-9 * m[1][0].norm().max(1.0));
            for col in 0..2 {
                let power = m[0][col].norm_sqr() + m[1][col].norm_sqr();
                prop_assert!(power <= 1.0 + 1e-9);
                if lossless {
                    prop_assert!((power - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn correlation_nf_at_least_one(p in device(), le in 0.05e-9f64..2e-9, rs in 10.0f64..200.0) {
        let c = ce_stage(p, le, 200.0);
        let grid = FrequencyGrid::linear(1e9, 10e9, 7).unwrap();
        let zs = Complex64::new(rs, 0.0);
        for nf in noise_correlation_nf(&c, &grid, zs).unwrap() {
            prop_assert!(nf >= 1.0);
        }
        for nf in noise_correlation_nf_with(&c, &grid, zs, NoiseOptions::noiseless()).unwrap() {
            prop_assert_eq!(nf, 1.0);
        }
    }

    #[test]
    fn nfmin_independent_of_le(p in device(), f in 1e9f64..10e9, le in 0.0f64..3e-9) {
        let w = 2.0 * PI * f;
        let a = noise_parameters(&p, 0.0, w).unwrap().nfmin;
        prop_assert_eq!(noise_parameters(&p, le, w).unwrap().nfmin.to_bits(), a.to_bits());
    }

    #[test]
    fn noise_voltage_without_degeneration(p in device(), f in 1e8f64..2e10) {
        let first_two = 4.0 * K_BOLTZMANN * p.t * p.rb + 2.0 * Q_ELECTRON * p.ic / (p.gm * p.gm);
        prop_assert_eq!(viedi_squared(&p, 0.0, 2.0 * PI * f), first_two);
    }

    #[test]
    fn friis_monotone(f1 in 1.0f64..10.0, f2 in 1.0f64..10.0, g1 in 0.1f64..1e3, df in 0.0f64..5.0, which in 0usize..2) {
        let base = [(f1, g1), (f2, 3.0)];
        let mut up = base;
        up[which].0 += df;
        prop_assert!(friis_cascade(&up).unwrap() >= friis_cascade(&base).unwrap());
    }

    #[test]
    fn interpolated_tf_matches_direct_solves(c in ladders(), fs in prop::collection::vec(1e8f64..3e10, 20)) {
        let sys = SisoSystem::new(&c, &Excitation::Port(0), &Response::PortVoltage(1)).unwrap();
        let tf = transfer_function_of(&sys).unwrap();
        for f in fs {
            let s = Complex64::new(0.0, 2.0 * PI * f);
            let direct = sys.eval(s).unwrap();
            prop_assert!((tf.eval(s) - direct).norm() <= 1e-8 * direct.norm());
            prop_assert!((tf.eval(s.conj()) - direct.conj()).norm() <= 1e-8 * direct.norm());
        }
    }

    #[test]
    fn pencil_poles_equal_minimal_tf_poles(c in ladders()) {
        let sys = SisoSystem::new(&c, &Excitation::Port(0), &Response::PortVoltage(1)).unwrap();
        let tf = transfer_function_of(&sys).unwrap();
        let minimal = factor(&tf).poles;
        let pencil = sys.poles().unwrap();
        prop_assert_eq!(pencil.len(), minimal.len() + tf.non_minimal.len());
        for p in &minimal {
            prop_assert!(nearest(&pencil, *p).unwrap().1 <= 1e-6);
        }
    }

    #[test]
    fn factor_round_trip(real in prop::collection::vec(8.0f64..11.0, 0..3),
                         pairs in prop::collection::vec((8.0f64..11.0, 0.05f64..1.5), 0..2),
                         lead in -3.0f64..3.0) {
        let mut roots: Vec<Complex64> = real.iter().map(|e| Complex64::new(-(10f64.powf(*e)), 0.0)).collect();
        for (e, angle) in pairs {
            let z = Complex64::from_polar(10f64.powf(e), PI - angle);
            roots.push(z);
            roots.push(z.conj());
        }
        prop_assume!(!roots.is_empty());
        let num = poly_from_roots(&roots, 10f64.powf(lead));
        let pz = factor(&RationalTF::new(num.clone(), vec![1.0]).unwrap());
        let back = poly_from_roots(&pz.zeros, pz.gain);
        prop_assert_eq!(back.len(), num.len());
        for (a, b) in num.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs());
        }
    }

    #[test]
    fn zin_closed_form_matches_mna(rb in 1.0f64..50.0, gm in 5e-3f64..0.2, cpi in 20e-15f64..2e-12,
                                   l in 0.05e-9f64..5e-9, f in 3.1e9f64..10.6e9) {
        let p = InputStageParams { rb, gm, cpi, l, rs: 50.0 };
        let z = zin_analytic(&p, 2.0 * PI * f);
        let numeric = input_impedance(&input_stage_circuit(&p).unwrap(), 0, f).unwrap();
        prop_assert!(rel(numeric, z) <= 1e-9);
    }

    #[test]
    fn factored_tf_holds_degeneration_pole(rb in 1.0f64..50.0, gm in 5e-3f64..0.2, cpi in 20e-15f64..2e-12,
                                           l in 0.05e-9f64..5e-9) {
        let p = InputStageParams { rb, gm, cpi, l, rs: 50.0 };
        let p1 = input_stage_poles(&p).poles[0];
        prop_assert!(nearest(&factor(&input_stage_tf(&p)).poles, p1).unwrap().1 <= 1e-9);
    }

    #[test]
    fn zin_real_part_linear_in_l(rb in 1.0f64..50.0, gm in 5e-3f64..0.2, cpi in 20e-15f64..2e-12,
                                 l in 0.0f64..5e-9, dl in 1e-12f64..1e-9, f in 1e9f64..1e10) {
        let w = 2.0 * PI * f;
        let p = InputStageParams { rb, gm, cpi, l, rs: 50.0 };
        let q = InputStageParams { l: l + dl, ..p };
        let slope = (zin_analytic(&q, w).re - zin_analytic(&p, w).re) / dl;
        prop_assert!((slope - gm / cpi).abs() <= 1e-6 * gm / cpi);
    }

    #[test]
    fn power_ratio_half(v in 0.5f64..5.0, ic in 1e-4f64..0.05) {
        let r = power_comparison(&PowerBudget { vcc1: v, vcc2: v, i1: ic, i2: ic, ic }).unwrap();
        prop_assert_eq!(r.ratio, 0.5);
    }

    #[test]
    fn input_match_hits_target(rb in 1.0f64..20.0, gm in 5e-3f64..0.2, ft in 5e9f64..60e9, target in 25.0f64..100.0) {
        let cpi = gm / (2.0 * PI * ft);
        let p = InputStageParams { rb, gm, cpi, l: 0.0, rs: 50.0 };
        let bounds = VariableBounds { l: (1e-15, 1e-6), ..Default::default() };
        let l = solve_input_match(&p, target, MatchFree::L, &bounds).unwrap().l.unwrap();
        let re = zin_analytic(&InputStageParams { l, ..p }, 2.0 * PI * 6e9).re;
        prop_assert!((re - target).abs() <= 1e-9 * target);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cancellation_in_bounds_and_deterministic(gm in 0.02f64..0.2, l in 0.2e-9f64..1e-9, ic3 in 0.5e-3f64..5e-3,
                                                rf in 10.0f64..2000.0, lf in 0.1e-9f64..5e-9, rl in 50.0f64..1000.0) {
        let in_p = InputStageParams { rb: 5.0, gm, cpi: gm * l / 45.0, l, rs: 50.0 };
        let q = HybridPiParams::from_bias_ft(ic3, DEFAULT_TEMPERATURE, f64::INFINITY, 0.0, 25e9, 0.0).unwrap();
        let out_p = OutputStageParams { gm3: q.gm, rf, lf, r2: 100.0, c4: 1e-12, rl, l4: 2e-9, cpi3: q.cpi };
        let opts = CancellationOptions::default();
        let a = solve_cancellation(&in_p, &out_p, &Var::FEEDBACK, &opts).unwrap();
        let b = solve_cancellation(&in_p, &out_p, &Var::FEEDBACK, &opts).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.variables.out_of_bounds().is_empty());
        let seed = cancellation_residuals(&in_p, &out_p, a.pairing.unwrap());
        let got = a.residuals.z1p1_rel.unwrap().max(a.residuals.z2p2_rel.unwrap());
        prop_assert!(got <= seed.0.max(seed.1));
    }
}

#[test]
fn cascade_group_delay_is_sum_of_stages() {
    // transconductance-buffered RC sections, so the phases add
    fn section(c: &mut Circuit, i: usize, from: &str, to: &str, r: f64, cap: f64) {
        c.vccs(&format!("G{i}"), (to, "0"), (from, "0"), -1.0 / r)
            .resistor(&format!("R{i}"), to, "0", r)
            .capacitor(&format!("C{i}"), to, "0", cap);
    }
    let grid = FrequencyGrid::linear(1e8, 10e9, 2001).unwrap();
    let two_port = |sections: &[(f64, f64)]| {
        let mut c = Circuit::new("");
        c.resistor("RIN", "in", "0", 50.0);
        let mut from = "in".to_string();
        for (i, &(r, cap)) in sections.iter().enumerate() {
            let to = if i + 1 == sections.len() { "out".to_string() } else { format!("n{i}") };
            section(&mut c, i, &from, &to, r, cap);
            from = to;
        }
        c.port("in", "0", 50.0).port("out", "0", 50.0);
        c
    };
    let cascade = group_delay(&two_port_sparams(&two_port(&[(40.0, 1e-12), (60.0, 0.5e-12)]), &grid).unwrap()).unwrap();
    let last = group_delay(&two_port_sparams(&two_port(&[(60.0, 0.5e-12)]), &grid).unwrap()).unwrap();
    // the first section is not port-loaded inside the cascade: take its node response
    let first = two_port(&[(40.0, 1e-12), (60.0, 0.5e-12)]);
    let sys = SisoSystem::new(&first, &Excitation::Port(0), &Response::Node("n0".into())).unwrap();
    let h: Vec<Complex64> = grid.points().iter().map(|f| sys.eval(Complex64::new(0.0, 2.0 * PI * f)).unwrap()).collect();
    let inner = group_delay_of(grid.points(), &h).unwrap();
    for k in 0..grid.len() {
        let sum = inner[k] + last[k];
        assert!((cascade[k] - sum).abs() <= 1e-9 * sum, "{k}: {} vs {sum}", cascade[k]);
    }
    // the sum is also the exact two-pole delay to discretization error
    let exact = |w: f64, tau: f64| tau / (1.0 + (w * tau).powi(2));
    let (t1, t2) = (40e-12, 60.0 * 50.0 / 110.0 * 0.5e-12);
    for (k, f) in grid.points().iter().enumerate() {
        let w = 2.0 * PI * f;
        let want = exact(w, t1) + exact(w, t2);
        assert!((cascade[k] - want).abs() <= 1e-4 * want);
    }
}

#[test]
fn builtin_lna_is_stable() {
    let c = build_topology(Topology::FullLnaFig8, &TopologyParams::builtin(Topology::FullLnaFig8)).unwrap();
    let s = two_port_sparams(&c, &FrequencyGrid::linear(3.1e9, 10.6e9, 401).unwrap()).unwrap();
    let st = stability(&s);
    assert!(st.k.iter().all(|&k| k > 1.0));
    assert!(st.delta_mag.iter().all(|&d| d < 1.0));
}

#[test]
#[ignore = "the printed Z2 = -Rf/Lf is not a zero of the output-stage circuit; see the acceptance run"]
fn printed_z2_is_a_numeric_zero() {
    for (rf, lf) in [(50.0, 1e-9), (300.0, 2e-9), (1000.0, 0.5e-9)] {
        let p = OutputStageParams { gm3: 0.08, rf, lf, r2: 100.0, c4: 1e-12, rl: 200.0, l4: 2e-9, cpi3: 0.5e-12 };
        let sys = SisoSystem::new(
            &output_stage_circuit(&p).unwrap(),
            &Excitation::Current { into: "in".into(), from: "0".into() },
            &Response::Node("out".into()),
        )
        .unwrap();
        let z2 = Complex64::new(output_stage_zeros_pole(&p).unwrap().z2, 0.0);
        assert!(nearest(&sys.zeros().unwrap(), z2).unwrap().1 <= 1e-6);
    }
}

#[test]
#[ignore = "the targeted degeneration pole is not a pole of the full circuit; see the acceptance run"]
fn designed_lna_shows_matched_pairs() {
    let params = TopologyParams::builtin(Topology::FullLnaFig8);
    let (_, solved) = design_full_lna(&params, &DesignOptions::default()).unwrap();
    let c = build_topology(Topology::FullLnaFig8, &solved).unwrap();
    let sys = SisoSystem::new(&c, &Excitation::Port(0), &Response::PortVoltage(1)).unwrap();
    let pz = factor(&transfer_function_of(&sys).unwrap());
    let target = Complex64::new(input_stage_of(&solved).unwrap().p1(), 0.0);
    let set = PoleZeroSet { poles: vec![nearest(&pz.poles, target).unwrap().0], zeros: pz.zeros.clone(), gain: pz.gain };
    let (_, p_err) = nearest(&pz.poles, target).unwrap();
    assert!(p_err < 5e-3 && cancellation_residual(&set)[0].residual < 5e-3);
}
