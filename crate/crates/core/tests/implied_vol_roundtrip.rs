use msoe::implied_vol::{bs_price, implied_vol, otm_kind};
use msoe::pricing::OptionKind;
use proptest::prelude::*;

/// σ ∈ {0.05, …, 1.0}, k ∈ {−0.55, …, 0.5}, T ∈ {0.1, 1}, quoted on the
/// out-of-the-money side. In-the-money quotes at these extremes carry their
/// time value below the rounding error of the intrinsic part.
#[test]
fn grid_round_trip() {
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        let sigma = 0.05 * i as f64;
        for j in 0..=21 {
            let k = -0.55 + 0.05 * j as f64;
            for t in [0.1, 1.0] {
                let strike = k.exp();
                let kind = otm_kind(1.0, strike, 0.0, t);
                let p = bs_price(1.0, strike, 0.0, t, sigma, kind);
                let iv = implied_vol(p, 1.0, strike, 0.0, t, kind).unwrap();
                worst = worst.max((iv - sigma).abs());
            }
        }
    }
    assert!(worst <= 1e-8, "worst {worst:e}");
}

proptest! {
    #[test]
    fn random_round_trip(sigma in 0.05..1.0f64, k in -0.55..0.5f64, t in 0.1..2.0f64, r in -0.02..0.05f64) {
        let strike = k.exp();
        let kind = otm_kind(1.0, strike, r, t);
        let p = bs_price(1.0, strike, r, t, sigma, kind);
        let iv = implied_vol(p, 1.0, strike, r, t, kind).unwrap();
        prop_assert!((iv - sigma).abs() <= 1e-8);
    }

    /// Either side works while the time value is well above rounding.
    #[test]
    fn both_sides_near_the_money(sigma in 0.2..1.0f64, k in -0.2..0.2f64, t in 0.25..2.0f64, call in any::<bool>()) {
        let kind = if call { OptionKind::Call } else { OptionKind::Put };
        let strike = k.exp();
        let p = bs_price(1.0, strike, 0.0, t, sigma, kind);
        let iv = implied_vol(p, 1.0, strike, 0.0, t, kind).unwrap();
        prop_assert!((iv - sigma).abs() <= 1e-8);
    }

    #[test]
    fn prices_outside_band_rejected(k in -0.4..0.4f64, t in 0.1..2.0f64) {
        let strike = k.exp();
        let intrinsic = (1.0 - strike).max(0.0);
        prop_assert!(implied_vol(intrinsic - 1e-3, 1.0, strike, 0.0, t, OptionKind::Call).is_err());
        prop_assert!(implied_vol(1.0 + 1e-3, 1.0, strike, 0.0, t, OptionKind::Call).is_err());
    }
}
