//! Standard normal distribution functions.

// Rational-approximation coefficients are kept digit for digit as published.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Density of N(0, 1).
pub fn pdf(z: f64) -> f64 {
    ln_pdf(z).exp()
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Distribution function of N(0, 1), accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] on the open unit interval.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if u > 0.0 && u < 1.0 {
        Ok(ppnd16(u))
    } else {
        Err(Error::Domain(format!("normal quantile needs u in (0, 1), got {u}")))
    }
}

/// `Φ⁻¹(1 - q)` computed from the tail probability `q` directly.
pub fn normal_isf(q: f64) -> Result<f64> {
    normal_quantile(q).map(|z| -z)
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

// Wichura's AS241 (PPND16), relative accuracy about 1e-16.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 40-digit arithmetic.
    const QUANTILES: [(f64, f64); 9] = [
        (0.975, 1.959_963_984_540_054_2),
        (0.8, 0.841_621_233_572_914_2),
        (0.95, 1.644_853_626_951_472_7),
        (1e-10, -6.361_340_902_404_056),
        (1e-15, -7.941_345_326_170_997),
        (0.999_999, 4.753_424_308_822_899),
        (0.3, -0.524_400_512_708_040_8),
        (0.024_25, -1.972_961_051_311_885),
        (0.5, 0.0),
    ];

    const CDFS: [(f64, f64); 6] = [
        (1.644_853_626_951_472_2, 0.949_999_999_999_999_9),
        (-8.0, 6.220_960_574_271_784e-16),
        (-3.2, 0.000_687_137_937_915_848_5),
        (0.7, 0.758_036_347_776_927),
        (2.3, 0.989_275_889_978_324_2),
        (5.5, 0.999_999_981_010_437_5),
    ];

    #[test]
    fn quantile_matches_reference() {
        for (u, z) in QUANTILES {
            let got = normal_quantile(u).unwrap();
            // 0.999999 is not exact in binary; its 1 - u carries a 6e-12 shift.
            assert!((got - z).abs() < 1e-10, "u={u}: {got} vs {z}");
        }
    }

    #[test]
    fn cdf_matches_reference() {
        for (z, u) in CDFS {
            let got = normal_cdf(z);
            let tol = 1e-15_f64.max(u * 1e-13);
            assert!((got - u).abs() < tol, "z={z}: {got} vs {u}");
        }
    }

    #[test]
    fn quantile_domain() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn inverse_pair() {
        let z = normal_quantile(normal_cdf(2.3)).unwrap();
        assert!((z - 2.3).abs() < 1e-8);
        for i in 1..200 {
            let z = -7.5 + 0.075 * i as f64;
            let back = if z < 0.0 {
                normal_quantile(normal_cdf(z)).unwrap()
            } else {
                normal_isf(normal_sf(z)).unwrap()
            };
            assert!((back - z).abs() < 1e-8, "{z} -> {back}");
        }
    }

    #[test]
    fn tails_are_symmetric() {
        for z in [0.1, 1.0, 3.0, 8.0] {
            assert!((normal_sf(z) - normal_cdf(-z)).abs() <= f64::EPSILON * normal_sf(z));
        }
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }
}
