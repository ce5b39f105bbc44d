use discnet::datagen::{self, DataModelSpec, InstanceSeed, ModelKind};
use discnet::dynsys::{self, DiscSystem, SolverOptions};
use discnet::kkt::{nnbpdn_kkt, nnls_kkt};
use discnet::numerics::{self, rel_l2_distance};
use discnet::solvers::{nnbpdn_path, nnls_active_set, IterOptions};
use discnet::RealVector;
use proptest::prelude::*;

fn instance(kind: ModelKind, m: usize, n: usize, seed: u64) -> datagen::Instance {
    let spec = DataModelSpec::new(kind, m, n, 2, 30.0).unwrap();
    datagen::generate(&spec, InstanceSeed::new(seed, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn network_reaches_the_active_set_solution(seed in any::<u64>(), gaussian in any::<bool>()) {
        let kind = if gaussian { ModelKind::Gaussian } else { ModelKind::Rect };
        let inst = instance(kind, 12, 6, seed);
        let sys = DiscSystem::new(inst.a.clone(), inst.y.clone(), 1.0).unwrap();
        let opts = SolverOptions { kkt_tol: 1e-11, ..SolverOptions::default() };
        let (net, _) = dynsys::solve(&sys, &RealVector::zeros(6), &opts).unwrap();
        let lh = nnls_active_set(&inst.a, &inst.y, 1e-12).unwrap();
        prop_assert!(net.converged);
        prop_assert!(nnls_kkt(&inst.a, &inst.y, &net.x_eq).unwrap().total <= 1e-9);
        prop_assert!(rel_l2_distance(&net.x_eq, &lh.x_eq) <= 1e-6);
    }

    #[test]
    fn exact_integrator_fits_underdetermined_data(seed in any::<u64>()) {
        let inst = instance(ModelKind::Rect, 6, 15, seed);
        let sys = DiscSystem::new(inst.a.clone(), inst.y.clone(), 1.0).unwrap();
        let (res, traj) = dynsys::solve(&sys, &RealVector::zeros(15), &SolverOptions::exact()).unwrap();
        prop_assert!(res.converged);
        prop_assert_eq!(res.switches, traj.switch_events.len());
        prop_assert!(traj.switch_events.windows(2).all(|w| w[0].t <= w[1].t));
        // fitted values are unique even when the minimizer is not
        let lh = nnls_active_set(&inst.a, &inst.y, 1e-12).unwrap();
        let fa = numerics::matvec(&inst.a, &res.x_eq).unwrap();
        let fb = numerics::matvec(&inst.a, &lh.x_eq).unwrap();
        prop_assert!(rel_l2_distance(&fa, &fb) <= 1e-6);
    }

    #[test]
    fn path_members_satisfy_their_optimality_conditions(seed in any::<u64>()) {
        let inst = instance(ModelKind::Rect, 10, 30, seed);
        let path = nnbpdn_path(&inst.a, &inst.y, 20, &IterOptions::default()).unwrap();
        for ((alpha, x), ok) in path.alphas.iter().zip(&path.solutions).zip(&path.converged) {
            prop_assert!(*ok);
            let k = nnbpdn_kkt(&inst.a, &inst.y, *alpha, x).unwrap();
            prop_assert!(k.total <= 1e-8 * (1.0 + path.alphas[0]), "alpha {}: {:?}", alpha, k);
        }
    }
}
