use std::fmt::Write as _;

use super::EmotionDistribution;
use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart: one group per token plus an `overall` group holding
/// the corpus prior, one bar per emotion. All inputs must share the emotion
/// list.
pub fn distribution_chart(dists: &[EmotionDistribution]) -> Result<String> {
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidConfig("no distributions to plot".into()))?;
    if dists.iter().any(|d| d.emotions != first.emotions) {
        return Err(Error::InvalidConfig("distributions use different emotion subsets".into()));
    }
    let emotions = &first.emotions;
    let mut groups: Vec<(&str, &[f64])> = dists.iter().map(|d| (d.token.as_str(), d.fractions.as_slice())).collect();
    groups.push(("overall", first.prior.as_slice()));

    let (bar, gap, left, top, plot_h) = (14.0, 18.0, 50.0, 20.0, 200.0);
    let group_w = bar * emotions.len().max(1) as f64 + gap;
    let width = left + group_w * groups.len() as f64 + 140.0;
    let height = top + plot_h + 50.0;
    let base = top + plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#,
        left + group_w * groups.len() as f64
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            y + 4.0
        );
    }
    for (g, (name, values)) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for (k, v) in values.iter().enumerate() {
            let h = v.clamp(0.0, 1.0) * plot_h;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{h:.1}" fill="{}"><title>{}: {v:.3}</title></rect>"#,
                x0 + k as f64 * bar,
                base - h,
                PALETTE[k % PALETTE.len()],
                escape(&emotions[k])
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + (group_w - gap) / 2.0,
            base + 16.0,
            escape(name)
        );
    }
    let lx = left + group_w * groups.len() as f64 + 20.0;
    for (k, e) in emotions.iter().enumerate() {
        let y = top + k as f64 * 16.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[k % PALETTE.len()],
            lx + 14.0,
            y + 9.0,
            escape(e)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(token: &str, fractions: Vec<f64>) -> EmotionDistribution {
        EmotionDistribution {
            token: token.into(),
            emotions: vec!["anger".into(), "joy".into()],
            instances: 3,
            remainder: 1.0 - fractions.iter().sum::<f64>(),
            fractions,
            prior: vec![0.5, 0.25],
            prior_remainder: 0.25,
        }
    }

    #[test]
    fn bars_per_group_and_emotion() {
        let svg = distribution_chart(&[dist("Trump", vec![0.6, 0.2]), dist("<b>", vec![0.1, 0.9])]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 3 * 2 + 2);
        assert!(svg.contains("overall") && svg.contains("&lt;b&gt;"));
    }

    #[test]
    fn mismatched_emotions_rejected() {
        let mut other = dist("b", vec![0.5, 0.5]);
        other.emotions = vec!["fear".into(), "joy".into()];
        assert!(distribution_chart(&[dist("a", vec![0.5, 0.5]), other]).is_err());
        assert!(distribution_chart(&[]).is_err());
    }
}
