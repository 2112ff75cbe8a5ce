//! Self-contained SVG bar charts of a results table.

use std::fmt::Write;

use crate::results::Row;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Distinct values in order of first appearance.
fn distinct<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

/// `1/k` when the value is the reciprocal of a small integer.
fn mu_label(mu: Option<f64>) -> String {
    let Some(mu) = mu else {
        return "scenario".to_string();
    };
    for k in 1..=20 {
        if (mu * k as f64 - 1.0).abs() < 1e-9 {
            return if k == 1 { "μ = 1".into() } else { format!("μ = 1/{k}") };
        }
    }
    format!("μ = {mu}")
}

fn percent(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

struct Chart {
    svg: String,
    lo: f64,
    hi: f64,
}

impl Chart {
    fn new(title: &str, y_label: &str, lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            escape(y_label)
        );
        let mut chart = Chart { svg, lo, hi };
        chart.axes();
        chart
    }

    fn y(&self, v: f64) -> f64 {
        let plot = HEIGHT - TOP - BOTTOM;
        HEIGHT - BOTTOM - (v - self.lo) / (self.hi - self.lo) * plot
    }

    fn axes(&mut self) {
        let ticks = 5;
        for k in 0..=ticks {
            let v = self.lo + (self.hi - self.lo) * k as f64 / ticks as f64;
            let y = self.y(v);
            let _ = writeln!(
                self.svg,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                y + 4.0,
                percent(v)
            );
        }
        let zero = self.y(0.0_f64.clamp(self.lo, self.hi));
        let _ = writeln!(
            self.svg,
            r#"<line x1="{LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="black"/>"#,
            WIDTH - RIGHT
        );
    }

    fn rect(&mut self, x: f64, width: f64, from: f64, to: f64, fill: &str, tip: &str) {
        let (a, b) = (self.y(from), self.y(to));
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{width:.2}" height="{:.2}" fill="{fill}"><title>{}</title></rect>"#,
            a.min(b),
            (a - b).abs(),
            escape(tip)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, text: &str) {
        let _ = writeln!(
            self.svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(text)
        );
    }

    fn legend(&mut self, entries: &[(String, String, bool)]) {
        let x = WIDTH - RIGHT + 15.0;
        for (k, (label, color, dashed)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * k as f64;
            if *dashed {
                let _ = writeln!(
                    self.svg,
                    r#"<line x1="{x}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="6,4"/>"#,
                    y + 6.0,
                    x + 14.0,
                    y + 6.0
                );
            } else {
                let _ = writeln!(
                    self.svg,
                    r#"<rect x="{x}" y="{y}" width="14" height="12" fill="{color}"/>"#
                );
            }
            self.text(x + 20.0, y + 11.0, "start", 12, label);
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bars of the savings fraction per mechanism for each flexibility
/// value, with the dictatorial bound as a dashed line.
pub fn savings_svg(rows: &[Row]) -> String {
    let mus = distinct(rows.iter().map(|r| r.mu.map(f64::to_bits)));
    let mechanisms = distinct(
        rows.iter()
            .filter(|r| r.mechanism != "dictatorial")
            .map(|r| r.mechanism.clone()),
    );
    let dictatorial = rows.iter().map(|r| r.dictatorial_savings_fraction).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.savings_fraction).fold(0.0, f64::min);
    let hi = rows.iter().map(|r| r.savings_fraction).fold(dictatorial, f64::max) * 1.15;
    let mut chart = Chart::new("Cost savings by mechanism", "savings / baseline cost", lo, hi);

    let plot = WIDTH - LEFT - RIGHT;
    let group = plot / mus.len().max(1) as f64;
    let bar = group * 0.8 / mechanisms.len().max(1) as f64;
    for (g, mu) in mus.iter().enumerate() {
        let x0 = LEFT + g as f64 * group + group * 0.1;
        for (k, mechanism) in mechanisms.iter().enumerate() {
            let Some(row) = rows
                .iter()
                .find(|r| r.mu.map(f64::to_bits) == *mu && &r.mechanism == mechanism)
            else {
                continue;
            };
            let x = x0 + k as f64 * bar;
            let tip = format!("{mechanism}, {}: {}", mu_label(row.mu), percent(row.savings_fraction));
            chart.rect(
                x,
                bar * 0.9,
                0.0,
                row.savings_fraction,
                PALETTE[k % PALETTE.len()],
                &tip,
            );
            let y = chart.y(row.savings_fraction.max(0.0)) - 4.0;
            chart.text(x + bar * 0.45, y, "middle", 9, &percent(row.savings_fraction));
        }
        let label = mu_label(mu.map(f64::from_bits));
        chart.text(
            LEFT + (g as f64 + 0.5) * group,
            HEIGHT - BOTTOM + 20.0,
            "middle",
            12,
            &label,
        );
    }
    let y = chart.y(dictatorial);
    let _ = writeln!(
        chart.svg,
        r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2" stroke-dasharray="6,4"><title>dictatorial: {}</title></line>"#,
        WIDTH - RIGHT,
        percent(dictatorial)
    );
    let mut legend: Vec<(String, String, bool)> = mechanisms
        .iter()
        .enumerate()
        .map(|(k, m)| (m.clone(), PALETTE[k % PALETTE.len()].to_string(), false))
        .collect();
    legend.push((format!("dictatorial ({})", percent(dictatorial)), "black".into(), true));
    chart.legend(&legend);
    chart.finish()
}

/// Stacked bars splitting each mechanism's production-cost saving into net
/// saving, discounts on shifted demand and wasted discounts.
pub fn components_svg(rows: &[Row]) -> String {
    let rows: Vec<&Row> = rows.iter().filter(|r| r.mechanism != "dictatorial").collect();
    let parts = |r: &Row| {
        let base = r.baseline_total();
        let waste = r.wasted_discounts / base;
        let useful = (r.discounts_paid - r.wasted_discounts) / base;
        (r.savings_fraction, useful, waste)
    };
    let lo = rows.iter().map(|r| r.savings_fraction).fold(0.0, f64::min);
    let hi = rows
        .iter()
        .map(|r| {
            let (net, useful, waste) = parts(r);
            net.max(0.0) + useful + waste
        })
        .fold(0.0, f64::max)
        * 1.1;
    let mut chart = Chart::new(
        "Where the production-cost saving goes",
        "share of baseline cost",
        lo,
        hi,
    );
    let colors = ["#55a868", "#4c72b0", "#c44e52"];
    let mus = distinct(rows.iter().map(|r| r.mu.map(f64::to_bits)));
    let per_group = rows.len() / mus.len().max(1);
    let plot = WIDTH - LEFT - RIGHT;
    let slot = plot / rows.len().max(1) as f64;
    for (k, row) in rows.iter().enumerate() {
        let (net, useful, waste) = parts(row);
        let x = LEFT + k as f64 * slot + slot * 0.15;
        let w = slot * 0.7;
        let who = format!("{}, {}", row.mechanism, mu_label(row.mu));
        let floor = net.max(0.0);
        chart.rect(
            x,
            w,
            0.0,
            net,
            colors[0],
            &format!("{who}: net saving {}", percent(net)),
        );
        chart.rect(
            x,
            w,
            floor,
            floor + useful,
            colors[1],
            &format!("{who}: discounts on shifted demand {}", percent(useful)),
        );
        chart.rect(
            x,
            w,
            floor + useful,
            floor + useful + waste,
            colors[2],
            &format!("{who}: wasted discounts {}", percent(waste)),
        );
        chart.text(x + w / 2.0, HEIGHT - BOTTOM + 16.0, "middle", 10, &row.mechanism);
        if per_group > 0 && k % per_group == 0 {
            chart.text(
                x + slot * per_group as f64 / 2.0 - slot * 0.15,
                HEIGHT - BOTTOM + 34.0,
                "middle",
                12,
                &mu_label(row.mu),
            );
        }
    }
    chart.legend(&[
        ("net saving".into(), colors[0].into(), false),
        ("discounts (shifted)".into(), colors[1].into(), false),
        ("wasted discounts".into(), colors[2].into(), false),
    ]);
    chart.finish()
}
