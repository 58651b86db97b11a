use speckledic::dic::{dic_dense, DicConfig, ShapeOrder};
use speckledic::field_gen::{resample_diagnostic, star_field, StarSpec};
use speckledic::image::BitDepth;
use speckledic::metrology::{attenuation_and_columns, moving_average, EvaluationROI};
use speckledic::speckle::{render_speckle, sample_disks, SpeckleParams};
use speckledic::warp::{quantize, render_deformed_speckle};

fn star() -> StarSpec {
    StarSpec {
        width: 600,
        height: 121,
        amplitude: 0.5,
        period_left: 8.0,
        period_right: 68.0,
        center_row: 60.0,
    }
}

#[test]
fn order_one_bias_grows_as_period_shrinks_below_four_m() {
    let s = star();
    let nominal = SpeckleParams::star_nominal();
    let p = SpeckleParams {
        width: s.width,
        height: s.height,
        disk_count_mean: nominal.disks_per_pixel() * (s.width * s.height) as f64,
        ..nominal
    };
    let disks = sample_disks(&p, 11).unwrap();
    let r = quantize(&render_speckle(&disks, &p).unwrap(), BitDepth::Eight);
    let d = quantize(&render_deformed_speckle(&disks, &s, &p).unwrap(), BitDepth::Eight);
    let cfg = DicConfig::with_window(11, ShapeOrder::First).unwrap();
    let est = dic_dense(&r, &d, &cfg).unwrap();
    let roi = EvaluationROI { x0: 10, y0: 10, width: 580, height: 101 };
    let curves = attenuation_and_columns(&est.field, &s, &roi).unwrap();
    let smooth = moving_average(&curves.column_mae.values, 15);
    let at = |period: f64| smooth[s.column_of_period(period).round() as usize - roi.x0];
    let four_m = 4.0 * cfg.half_size as f64;
    let periods: Vec<f64> = (0..6).map(|k| 10.0 + k as f64 * (four_m - 10.0) / 5.0).collect();
    let values: Vec<f64> = periods.iter().map(|&q| at(q)).collect();
    for w in values.windows(2) {
        assert!(w[0] > w[1], "column MAE at periods {periods:?}: {values:?}");
    }
    assert!(at(60.0) < values[5]);
}

#[test]
fn resampling_aliases_short_periods() {
    let s = StarSpec {
        width: 400,
        height: 201,
        period_left: 8.0,
        period_right: 80.0,
        center_row: 100.0,
        ..star()
    };
    let f = star_field(&s).unwrap();
    let factor = 8;
    let r = resample_diagnostic(&f, factor).unwrap();
    let aliased = (0..s.width).filter(|&x| s.period(x as f64) < 2.0 * factor as f64);
    let mut n = 0;
    for x in aliased {
        n += 1;
        let (mut err, mut mag) = (0.0, 0.0);
        for y in 0..s.height {
            err += (r.get(x, y).1 - f.get(x, y).1).abs();
            mag += f.get(x, y).1.abs();
        }
        assert!(err >= 0.5 * mag, "column {x}: error {err} vs magnitude {mag}");
    }
    assert!(n > 40);
}
