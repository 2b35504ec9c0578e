//! Minimal SVG line chart of a sweep table: error against rank, log-scale y.

use std::fmt::Write as _;

use crate::experiment::ExperimentTable;

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// One series per (method, kernel); test error solid, training error dashed.
pub fn render_svg(table: &ExperimentTable) -> String {
    let mut series: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for r in table.rows.iter().filter(|r| r.ok()) {
        let name = format!("{} ({})", r.method.name(), r.kernel);
        let point = (r.k as f64, r.eps_train, r.eps_test);
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pts)) => pts.push(point),
            None => series.push((name, vec![point])),
        }
    }
    let positive = |v: f64| v.is_finite() && v > 0.0;
    let all_eps: Vec<f64> = series
        .iter()
        .flat_map(|(_, p)| p.iter().flat_map(|&(_, a, b)| [a, b]))
        .filter(|v| positive(*v))
        .collect();
    let ks: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let (kmin, kmax) = ks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(k), b.max(k)));
    let (lmin, lmax) = all_eps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v.log10()), b.max(v.log10())));
    let (lmin, lmax) = if lmin.is_finite() { (lmin.floor(), lmax.ceil().max(lmin.floor() + 1.0)) } else { (-1.0, 0.0) };
    let (kmin, kmax) = if kmin.is_finite() && kmax > kmin { (kmin, kmax) } else { (0.0, kmin.max(0.0) + 1.0) };
    let sx = |k: f64| MARGIN + (k - kmin) / (kmax - kmin) * (W - 2.0 * MARGIN);
    let sy = |v: f64| H - MARGIN - (v.log10() - lmin) / (lmax - lmin) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for e in (lmin as i32)..=(lmax as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    let mut kticks: Vec<f64> = ks.clone();
    kticks.sort_by(f64::total_cmp);
    kticks.dedup();
    for k in kticks {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#, sx(k), y0 + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k</text>"#, W / 2.0, H - 14.0);

    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        for (dash, pick) in [("", 2usize), (r#" stroke-dasharray="5,4""#, 1)] {
            let path: Vec<String> = pts
                .iter()
                .filter_map(|&(k, a, b)| {
                    let v = if pick == 1 { a } else { b };
                    positive(v).then(|| format!("{:.1},{:.1}", sx(k), sy(v)))
                })
                .collect();
            if !path.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    path.join(" ")
                );
            }
        }
        let ly = MARGIN + 16.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{name}</text>"#,
            W - MARGIN - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#555">solid: test, dashed: train</text>"##,
        W - MARGIN - 4.0,
        H - MARGIN - 8.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Row;
    use okdmd::okdmd::Method;
    use okdmd::KernelSpec;

    #[test]
    fn renders_one_polyline_pair_per_series() {
        let row = |k: usize, e: f64| Row {
            method: Method::Okdmd,
            kernel: KernelSpec::Logarithmic,
            k,
            eps_train: e,
            eps_test: 2.0 * e,
            fit_seconds: 0.0,
            preimage_convergence_rate: 1.0,
            status: "ok".into(),
        };
        let table = ExperimentTable {
            rows: vec![row(2, 1e-1), row(4, 1e-3)],
        };
        let svg = render_svg(&table);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("okdmd (log)"));
    }
}
