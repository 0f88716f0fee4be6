//! CSV rendering with 12 significant digits.

use super::{MetricRecord, PaCurveRow, ScatterPoint, SpectrumRow};
use crate::precoders::QamConstellation;

/// `v` in scientific notation with 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.11e}")
}

fn render<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

pub fn ber_csv(records: &[MetricRecord]) -> String {
    render(
        &["scheme", "precoder", "label", "snr_db", "ber", "bits", "errors", "mean_beta", "overloads", "mean_iterations", "converged_fraction"],
        records.iter().map(|r| {
            vec![
                r.scheme.clone(),
                r.precoder.clone(),
                r.label.clone(),
                fmt_sig(r.snr_db),
                fmt_sig(r.ber),
                r.bits.to_string(),
                r.errors.to_string(),
                fmt_sig(r.mean_beta),
                r.overloads.to_string(),
                fmt_sig(r.mean_iterations),
                fmt_sig(r.converged_fraction),
            ]
        }),
    )
}

pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    render(
        &["label", "trial", "block", "user", "re", "im", "sent_re", "sent_im"],
        points.iter().map(|p| {
            vec![
                p.label.clone(),
                p.trial.to_string(),
                p.block.to_string(),
                p.user.to_string(),
                fmt_sig(p.point.re),
                fmt_sig(p.point.im),
                fmt_sig(p.sent.re),
                fmt_sig(p.sent.im),
            ]
        }),
    )
}

/// Constellation points and per-axis decision thresholds.
pub fn constellation_csv(q: &QamConstellation) -> String {
    let pts = q.points().into_iter().map(|p| vec!["point".to_string(), fmt_sig(p.re), fmt_sig(p.im)]);
    let bounds = q.boundaries().into_iter().map(|b| vec!["boundary".to_string(), fmt_sig(b), fmt_sig(b)]);
    render(&["kind", "re", "im"], pts.chain(bounds))
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    render(
        &["theta_deg", "measured", "predicted"],
        rows.iter().map(|r| vec![fmt_sig(r.theta_deg), fmt_sig(r.measured), fmt_sig(r.predicted)]),
    )
}

pub fn pa_curves_csv(rows: &[PaCurveRow]) -> String {
    render(
        &["r", "g_a", "g_p", "ideal", "r_1db"],
        rows.iter().map(|r| vec![fmt_sig(r.r), fmt_sig(r.g_a), fmt_sig(r.g_p), fmt_sig(r.ideal), u8::from(r.is_r1db).to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_sig(-1234.5), "-1.23450000000e3");
        assert_eq!(fmt_sig(0.0), "0");
        let back: f64 = fmt_sig(std::f64::consts::PI).parse().unwrap();
        assert!((back - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn spectrum_header() {
        let text = spectrum_csv(&[SpectrumRow { theta_deg: 5.0, measured: 1e-3, predicted: 2e-3 }]);
        assert_eq!(text, "theta_deg,measured,predicted\n5.00000000000e0,1.00000000000e-3,2.00000000000e-3\n");
    }
}
