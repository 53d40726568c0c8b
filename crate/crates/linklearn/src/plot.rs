//! Self-contained SVG line charts for training logs and error-rate curves.
//!
//! The renderer is deliberately small and fully deterministic: the same
//! records always produce byte-identical SVG text, so figures can be diffed
//! and regenerated reproducibly alongside the CSVs they come from.

use crate::error::{Error, Result};
use crate::eval::BlerRecord;
use crate::train::EpisodeRecord;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One plotted line. Non-finite samples split the line into segments, and on
/// a logarithmic axis non-positive values do too.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// Chart-level text and axis behavior.
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick label: decimal where compact, scientific otherwise, trailing zeros
/// trimmed so `0.6000000000000001` prints as `0.6`.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.6e}");
    let (mantissa, exponent) = sci.split_once('e').expect("{:e} always has an exponent");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    let exponent: i32 = exponent.parse().expect("exponent is an integer");
    if (-3..=4).contains(&exponent) {
        let rounded: f64 = format!("{mantissa}e{exponent}").parse().unwrap();
        let text = format!("{rounded:.7}");
        let text = text.trim_end_matches('0').trim_end_matches('.');
        return text.to_string();
    }
    format!("{mantissa}e{exponent}")
}

/// Evenly spaced "nice" tick positions covering `[min, max]`.
fn linear_ticks(min: f64, max: f64) -> Vec<f64> {
    let range = max - min;
    let raw = range / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let normalized = raw / magnitude;
    let nice = if normalized <= 1.0 {
        1.0
    } else if normalized <= 2.0 {
        2.0
    } else if normalized <= 5.0 {
        5.0
    } else {
        10.0
    };
    let step = nice * magnitude;
    let first = (min / step).ceil();
    let last = (max / step).floor();
    (first as i64..=last as i64).map(|i| i as f64 * step).collect()
}

/// Decade ticks covering `[min, max]`, thinned when the span is wide.
fn log_ticks(min: f64, max: f64) -> Vec<f64> {
    let lo = min.log10().floor() as i32;
    let hi = max.log10().ceil() as i32;
    let span = (hi - lo).max(1);
    let stride = (span as usize / 9 + 1) as i32;
    (lo..=hi).step_by(stride as usize).map(|d| 10f64.powi(d)).collect()
}

struct AxisRange {
    min: f64,
    max: f64,
}

impl AxisRange {
    fn padded(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            return None;
        }
        if min == max {
            let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
            min -= pad;
            max += pad;
        }
        Some(Self { min, max })
    }

    fn padded_log(values: impl Iterator<Item = f64>) -> Option<Self> {
        let base = Self::padded(values.filter(|v| *v > 0.0))?;
        // Expand to full decades so the curve never touches a border.
        Some(Self {
            min: 10f64.powf(base.min.log10().floor()),
            max: 10f64.powf(base.max.log10().ceil().max(base.min.log10().floor() + 1.0)),
        })
    }
}

/// Renders the chart as SVG text. Errors when no series contributes a single
/// drawable point (for a logarithmic axis that means a positive one).
pub fn render_line_chart(spec: &ChartSpec, series: &[Series]) -> Result<String> {
    let drawable = |y: &f64| y.is_finite() && (!spec.log_y || *y > 0.0);
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && drawable(y))
        .map(|(x, _)| *x);
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && drawable(y))
        .map(|(_, y)| *y);
    let x_range = AxisRange::padded(xs).ok_or_else(|| {
        Error::InvalidArgument("nothing to plot: no drawable points".into())
    })?;
    let y_range = if spec.log_y {
        AxisRange::padded_log(ys).ok_or_else(|| {
            Error::InvalidArgument(
                "nothing to plot on a logarithmic axis: no positive values".into(),
            )
        })?
    } else {
        AxisRange::padded(ys).expect("x range existed, so y range does too")
    };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_px = |x: f64| MARGIN_LEFT + (x - x_range.min) / (x_range.max - x_range.min) * plot_w;
    let y_frac = |y: f64| {
        if spec.log_y {
            (y.log10() - y_range.min.log10()) / (y_range.max.log10() - y_range.min.log10())
        } else {
            (y - y_range.min) / (y_range.max - y_range.min)
        }
    };
    let y_px = |y: f64| MARGIN_TOP + (1.0 - y_frac(y)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"Helvetica, Arial, sans-serif\">\n",
        w = WIDTH,
        h = HEIGHT
    ));
    svg.push_str(&format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        px(WIDTH / 2.0),
        xml_escape(&spec.title)
    ));

    // Gridlines and tick labels.
    let x_ticks = linear_ticks(x_range.min, x_range.max);
    let y_ticks = if spec.log_y {
        log_ticks(y_range.min, y_range.max)
    } else {
        linear_ticks(y_range.min, y_range.max)
    };
    for &t in &x_ticks {
        let x = x_px(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{bot}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            x = px(x),
            top = px(MARGIN_TOP),
            bot = px(MARGIN_TOP + plot_h)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            px(x),
            px(MARGIN_TOP + plot_h + 18.0),
            fmt_tick(t)
        ));
    }
    for &t in &y_ticks {
        let y = y_px(t);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{right}\" y2=\"{y}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            left = px(MARGIN_LEFT),
            right = px(MARGIN_LEFT + plot_w),
            y = px(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            px(MARGIN_LEFT - 6.0),
            px(y + 4.0),
            fmt_tick(t)
        ));
    }

    // Axes.
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        px(MARGIN_LEFT),
        px(MARGIN_TOP),
        px(plot_w),
        px(plot_h)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        px(MARGIN_LEFT + plot_w / 2.0),
        px(HEIGHT - 12.0),
        xml_escape(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{y}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {y})\">{label}</text>\n",
        y = px(MARGIN_TOP + plot_h / 2.0),
        label = xml_escape(&spec.y_label)
    ));

    // Series, split into segments wherever a point is undrawable.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { " stroke-dasharray=\"6 3\"" } else { "" };
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, svg: &mut String| {
            if segment.len() >= 2 {
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash} points=\"{}\"/>\n",
                    segment.join(" ")
                ));
            } else if segment.len() == 1 {
                // A lone sample still deserves ink.
                let (x, y) = segment[0].split_once(',').unwrap();
                svg.push_str(&format!(
                    "<circle cx=\"{x}\" cy=\"{y}\" r=\"2\" fill=\"{color}\"/>\n"
                ));
            }
            segment.clear();
        };
        for &(x, y) in &s.points {
            if x.is_finite() && drawable(&y) {
                segment.push(format!("{},{}", px(x_px(x)), px(y_px(y))));
            } else {
                flush(&mut segment, &mut svg);
            }
        }
        flush(&mut segment, &mut svg);
    }

    // Legend, top-right inside the plot area.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 16.0 + 16.0 * i as f64;
        let x0 = MARGIN_LEFT + plot_w - 150.0;
        let dash = if s.dashed { " stroke-dasharray=\"6 3\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"1.6\"{dash}/>\n",
            px(x0),
            px(x0 + 22.0),
            y = px(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            px(x0 + 28.0),
            px(y + 4.0),
            xml_escape(&s.label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn write_chart(path: &Path, spec: &ChartSpec, series: &[Series]) -> Result<()> {
    let svg = render_line_chart(spec, series)?;
    std::fs::write(path, svg)?;
    Ok(())
}

/// Renders the three standard training figures — per-step reward, critic
/// loss, receiver loss, each against episode — into `dir` and returns the
/// paths written.
pub fn plot_training_log(records: &[EpisodeRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("refusing to plot an empty log".into()));
    }
    std::fs::create_dir_all(dir)?;
    let series_of = |label: &str, pick: fn(&EpisodeRecord) -> f64| Series {
        label: label.to_string(),
        points: records.iter().map(|r| (r.episode as f64, pick(r))).collect(),
        dashed: false,
    };
    let figures: [(&str, &str, &str, fn(&EpisodeRecord) -> f64); 3] = [
        ("reward.svg", "Episode reward (per-step mean)", "reward", |r| r.reward_mean),
        ("critic_loss.svg", "Critic loss", "critic loss", |r| r.critic_loss),
        ("receiver_loss.svg", "Receiver loss", "receiver loss", |r| r.receiver_loss),
    ];
    let mut written = Vec::new();
    for (file, title, label, pick) in figures {
        let spec = ChartSpec {
            title: title.to_string(),
            x_label: "episode".to_string(),
            y_label: label.to_string(),
            log_y: false,
        };
        let path = dir.join(file);
        write_chart(&path, &spec, &[series_of(label, pick)])?;
        written.push(path);
    }
    Ok(written)
}

/// Renders one or more labeled error-rate curves on a shared logarithmic
/// axis: solid for block errors, dashed for bit errors.
pub fn plot_bler_curves(curves: &[(String, Vec<BlerRecord>)], path: &Path) -> Result<()> {
    if curves.is_empty() || curves.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::InvalidArgument("refusing to plot empty curves".into()));
    }
    let mut series = Vec::new();
    for (label, records) in curves {
        series.push(Series {
            label: format!("{label} BLER"),
            points: records.iter().map(|r| (r.snr_db, r.bler)).collect(),
            dashed: false,
        });
        series.push(Series {
            label: format!("{label} BER"),
            points: records.iter().map(|r| (r.snr_db, r.ber)).collect(),
            dashed: true,
        });
    }
    let spec = ChartSpec {
        title: "Error rate vs SNR".to_string(),
        x_label: "SNR (dB)".to_string(),
        y_label: "error rate".to_string(),
        log_y: true,
    };
    write_chart(path, &spec, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("plot-test-{}-{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn record(episode: u64, reward_mean: f64, critic: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode,
            reward_sum: reward_mean * 10.0,
            reward_mean,
            critic_loss: critic,
            receiver_loss: 0.5,
            seconds: 0.1,
        }
    }

    #[test]
    fn tick_formatting_is_compact_and_stable() {
        assert_eq!(fmt_tick(0.0), "0");
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
        assert_eq!(fmt_tick(20.0), "20");
        assert_eq!(fmt_tick(-2.5), "-2.5");
        assert_eq!(fmt_tick(1e-7), "1e-7");
        assert_eq!(fmt_tick(0.001), "0.001");
        assert_eq!(fmt_tick(250000.0), "2.5e5");
    }

    #[test]
    fn chart_text_is_deterministic_svg() {
        let spec = ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y: false,
        };
        let series = [Series {
            label: "a & b < c".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)],
            dashed: false,
        }];
        let a = render_line_chart(&spec, &series).unwrap();
        let b = render_line_chart(&spec, &series).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("<polyline"));
        assert!(a.contains("a &amp; b &lt; c"), "labels must be XML-escaped");
    }

    #[test]
    fn non_finite_samples_split_the_line() {
        let spec = ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y: false,
        };
        let series = [Series {
            label: "s".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 1.5), (4.0, 1.0)],
            dashed: false,
        }];
        let svg = render_line_chart(&spec, &series).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2, "NaN must break the polyline:\n{svg}");
    }

    #[test]
    fn log_axis_drops_nonpositive_and_errors_when_nothing_remains() {
        let spec = ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y: true,
        };
        let mixed = [Series {
            label: "s".into(),
            points: vec![(0.0, 0.5), (1.0, 0.1), (2.0, 0.0), (3.0, 0.01)],
            dashed: false,
        }];
        let svg = render_line_chart(&spec, &mixed).unwrap();
        // The zero splits the line; the trailing lone point draws as a dot.
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);

        let hopeless = [Series {
            label: "s".into(),
            points: vec![(0.0, 0.0), (1.0, -1.0)],
            dashed: false,
        }];
        assert!(render_line_chart(&spec, &hopeless).is_err());
    }

    #[test]
    fn training_log_produces_three_identical_rerenders() {
        let records: Vec<EpisodeRecord> = (1..=20)
            .map(|e| {
                let c = if e < 3 { f64::NAN } else { 5.0 / e as f64 };
                record(e, -5.0 + 0.2 * e as f64, c)
            })
            .collect();
        let dir_a = temp_dir("log-a");
        let dir_b = temp_dir("log-b");
        let paths_a = plot_training_log(&records, &dir_a).unwrap();
        let paths_b = plot_training_log(&records, &dir_b).unwrap();
        assert_eq!(paths_a.len(), 3);
        for (pa, pb) in paths_a.iter().zip(&paths_b) {
            assert_eq!(
                std::fs::read(pa).unwrap(),
                std::fs::read(pb).unwrap(),
                "re-rendering must be byte-identical"
            );
        }
        assert!(plot_training_log(&[], &dir_a).is_err());
        std::fs::remove_dir_all(&dir_a).unwrap();
        std::fs::remove_dir_all(&dir_b).unwrap();
    }

    #[test]
    fn bler_chart_draws_solid_and_dashed_pairs() {
        let records: Vec<BlerRecord> = (0..6)
            .map(|i| BlerRecord {
                snr_db: 2.0 * i as f64,
                bler: 0.5 / 10f64.powi(i),
                ber: 0.05 / 10f64.powi(i),
                num_blocks: 1000,
            })
            .collect();
        let dir = temp_dir("bler");
        let path = dir.join("bler.svg");
        plot_bler_curves(&[("run".to_string(), records)], &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.contains("run BLER"));
        assert!(svg.contains("run BER"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(plot_bler_curves(&[], &path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
