use inforelax::mri::{
    boxcar_input, build_instance, run_l1_certification, run_l2_design, AcquisitionSettings, DesignSpec,
    MriParameters, Norm,
};
use inforelax::relax::{check_exactness, DesignOptions};
use inforelax::ssmodel::simulate;
use inforelax::Error;

fn defaults() -> (MriParameters, AcquisitionSettings, DesignOptions) {
    (MriParameters::default(), AcquisitionSettings::default(), DesignOptions::default())
}

#[test]
fn l2_design_is_exact_feasible_and_physical() {
    let (p, s, o) = defaults();
    let spec = DesignSpec::new(Norm::L2);
    let inst = build_instance(&p, &s, &spec).unwrap();
    assert!(check_exactness(&inst.program));
    let r = run_l2_design(&p, &s, &spec, &o).unwrap();
    assert!(r.exact);
    let u = r.extracted_u.unwrap();
    assert!(u.iter().all(|x| x.abs() <= 1.0 + 1e-7));
    assert!((u.norm() - 4.0).abs() <= 1e-6);
    let traj = simulate(&inst.model, u.as_slice()).unwrap();
    assert!(traj.outputs.iter().all(|y| *y >= -1e-9));
    // nothing is gained by injecting in the last sample
    assert!(u[29].abs() < 1e-3);
}

#[test]
fn larger_l2_budget_raises_the_optimum() {
    let (p, s, o) = defaults();
    let base = run_l2_design(&p, &s, &DesignSpec::new(Norm::L2), &o).unwrap();
    let wider = DesignSpec {
        l2_budget: 8.0,
        ..DesignSpec::new(Norm::L2)
    };
    let more = run_l2_design(&p, &s, &wider, &o).unwrap();
    assert!(more.relaxation_value > base.relaxation_value * 1.01);
}

#[test]
fn l1_relaxation_is_not_rank_one_and_bounds_the_boxcar() {
    let (p, s, o) = defaults();
    for theta in [&["kPL"][..], &["kPL", "kTRANS"][..]] {
        let r = run_l1_certification(&p, &s, &DesignSpec::new(Norm::L1).with_theta(theta), &o).unwrap();
        assert_eq!((r.lifted_dim, r.lifted_constraints), (31, 497));
        assert!(r.extracted_u.is_none());
        assert!(!r.exact);
        assert!(r.eigen_ratio.unwrap() > 1e-3);
        let boxcar = boxcar_input(30, 1.0, 8.0).unwrap();
        assert_eq!(r.candidate_u.unwrap().as_slice(), boxcar.as_slice());
        let ratio = r.ratio.unwrap();
        assert!(ratio <= 1.0 && ratio > 0.95, "{theta:?}: {ratio}");
    }
}

#[test]
fn wrong_norm_is_rejected() {
    let (p, s, o) = defaults();
    assert!(matches!(
        run_l2_design(&p, &s, &DesignSpec::new(Norm::L1), &o),
        Err(Error::InvalidArgument(_))
    ));
    assert!(run_l1_certification(&p, &s, &DesignSpec::new(Norm::L2), &o).is_err());
}

#[test]
fn budget_beyond_horizon_is_rejected() {
    let (p, s, o) = defaults();
    let spec = DesignSpec {
        l1_budget: 31.0,
        ..DesignSpec::new(Norm::L1)
    };
    assert!(run_l1_certification(&p, &s, &spec, &o).is_err());
}
