use msoe::forward_variance::ForwardVarianceCurve;
use msoe::pricing::{price, price_barrier, Contract, OptionKind};
use msoe::simulate::{simulate_paths, GridSchedule, PathBatch, Scheme};
use msoe::soe_kernel::generate_soe;
use msoe::ModelParams;

fn batch(m: usize, seed: u64, r: f64) -> (PathBatch, ModelParams) {
    let p = ModelParams::new(ForwardVarianceCurve::Constant(0.055225), 0.07, -0.9, 1.9, 1.0, r);
    let schedule = GridSchedule::new(vec![0.5, 1.0], 64).unwrap();
    let soe = generate_soe(p.hurst, schedule.tau(), 1.0, 1e-2).unwrap();
    (simulate_paths(&p, &schedule, &soe, Scheme::Msoe, m, seed).unwrap(), p)
}

#[test]
fn call_prices_decrease_and_put_prices_increase_in_strike() {
    let (b, p) = batch(8192, 1, 0.02);
    let strikes: Vec<f64> = (0..30).map(|i| 0.6 + 0.03 * i as f64).collect();
    for t in [0.5, 1.0] {
        let calls: Vec<f64> = strikes
            .iter()
            .map(|&k| price(&b, &Contract::vanilla(OptionKind::Call, k, t), p.r).unwrap().mean)
            .collect();
        let puts: Vec<f64> = strikes
            .iter()
            .map(|&k| price(&b, &Contract::vanilla(OptionKind::Put, k, t), p.r).unwrap().mean)
            .collect();
        assert!(calls.windows(2).all(|w| w[1] <= w[0]));
        assert!(puts.windows(2).all(|w| w[1] >= w[0]));
    }
}

/// C − P = e^{−rT}(mean S_T − K) holds on the batch up to rounding.
#[test]
fn parity_holds_pathwise() {
    let (b, p) = batch(4096, 2, 0.03);
    for t in [0.5, 1.0] {
        let s = b.terminal(t).unwrap();
        let mean_s = s.iter().sum::<f64>() / s.len() as f64;
        for k in [0.8, 1.0, 1.2] {
            let c = price(&b, &Contract::vanilla(OptionKind::Call, k, t), p.r).unwrap().mean;
            let q = price(&b, &Contract::vanilla(OptionKind::Put, k, t), p.r).unwrap().mean;
            let rhs = (-p.r * t).exp() * (mean_s - k);
            assert!((c - q - rhs).abs() < 1e-13, "T={t} K={k}: {}", c - q - rhs);
        }
    }
}

#[test]
fn standard_error_shrinks_like_inverse_root() {
    let c = Contract::vanilla(OptionKind::Put, 0.95, 1.0);
    let (small, _) = batch(4096, 3, 0.0);
    let (large, _) = batch(65536, 3, 0.0);
    let ratio = price(&small, &c, 0.0).unwrap().stderr / price(&large, &c, 0.0).unwrap().stderr;
    assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
}

#[test]
fn barrier_identities_on_one_batch() {
    let (b, p) = batch(8192, 4, 0.0);
    for t in [0.5, 1.0] {
        let put = price(&b, &Contract::vanilla(OptionKind::Put, 0.95, t), p.r).unwrap().mean;
        let call = price(&b, &Contract::vanilla(OptionKind::Call, 1.05, t), p.r).unwrap().mean;
        let dop0 = price_barrier(&b, &Contract::barrier(OptionKind::DownAndOutPut, 0.95, t, 0.0), p.r).unwrap();
        assert_eq!(dop0.mean, put);
        for bar in [0.7, 0.75, 0.8, 0.85] {
            let out = price_barrier(&b, &Contract::barrier(OptionKind::DownAndOutPut, 0.95, t, bar), p.r).unwrap().mean;
            let inn = price_barrier(&b, &Contract::barrier(OptionKind::DownAndInPut, 0.95, t, bar), p.r).unwrap().mean;
            assert!((out + inn - put).abs() <= 1e-15);
        }
        let mut last = 0.0;
        for bar in [1.15, 1.2, 1.25, 1.3] {
            let uoc = price_barrier(&b, &Contract::barrier(OptionKind::UpAndOutCall, 1.05, t, bar), p.r).unwrap().mean;
            assert!(uoc <= call && uoc >= last);
            last = uoc;
        }
    }
}
