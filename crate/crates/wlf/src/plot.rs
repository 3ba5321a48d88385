//! Minimal SVG emitters: training curves, marginal scatter plots, and
//! trajectory fans. No plotting dependency; the output is plain SVG text.

use crate::dataio::MarginalDataset;
use crate::error::{Result, WlfError};
use crate::trainer::TrainHistory;
use crate::transport_eval::TrajectoryBundle;
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn from_bounds(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Result<Frame> {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        for v in xs {
            if !v.is_finite() {
                return Err(WlfError::numeric("non-finite value in plot data"));
            }
            x_lo = x_lo.min(v);
            x_hi = x_hi.max(v);
        }
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for v in ys {
            if !v.is_finite() {
                return Err(WlfError::numeric("non-finite value in plot data"));
            }
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
        if !x_lo.is_finite() || !y_lo.is_finite() {
            return Err(WlfError::contract("empty plot data"));
        }
        let pad = |lo: &mut f64, hi: &mut f64| {
            if *hi - *lo < 1e-12 {
                *lo -= 0.5;
                *hi += 0.5;
            } else {
                let p = 0.05 * (*hi - *lo);
                *lo -= p;
                *hi += p;
            }
        };
        pad(&mut x_lo, &mut x_hi);
        pad(&mut y_lo, &mut y_hi);
        Ok(Frame { x_lo, x_hi, y_lo, y_hi })
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open_svg(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let (x1, y1) = (WIDTH - MARGIN, MARGIN);
    let _ = write!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#333\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
    );
    for k in 0..=4 {
        let xv = f.x_lo + (f.x_hi - f.x_lo) * k as f64 / 4.0;
        let yv = f.y_lo + (f.y_hi - f.y_lo) * k as f64 / 4.0;
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\">{:.3}</text>\n\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\">{:.3}</text>\n",
            f.px(xv),
            HEIGHT - MARGIN + 16.0,
            xv,
            MARGIN - 6.0,
            f.py(yv) + 3.0,
            yv,
        );
    }
}

/// Dual estimate against iteration.
pub fn plot_history(history: &TrainHistory, title: &str) -> Result<String> {
    if history.rows.is_empty() {
        return Err(WlfError::contract("history is empty"));
    }
    let f = Frame::from_bounds(
        history.rows.iter().map(|r| r.iter as f64),
        history.rows.iter().map(|r| r.dual_estimate),
    )?;
    let mut svg = open_svg(title);
    axes(&mut svg, &f, "iteration", "dual estimate");
    let pts: Vec<String> = history
        .rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", f.px(r.iter as f64), f.py(r.dual_estimate)))
        .collect();
    let _ = write!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
        pts.join(" "),
        PALETTE[0]
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Scatter of every snapshot, one color per marginal time; the first two
/// coordinates are plotted (1-D data uses time on the horizontal axis).
pub fn plot_marginals(dataset: &MarginalDataset, title: &str) -> Result<String> {
    let one_d = dataset.dim == 1;
    let xs: Vec<f64> = dataset
        .snapshots
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let t = dataset.times[i];
            s.rows()
                .into_iter()
                .map(move |r| if one_d { t } else { r[0] })
                .collect::<Vec<_>>()
        })
        .collect();
    let ys: Vec<f64> = dataset
        .snapshots
        .iter()
        .flat_map(|s| {
            s.rows()
                .into_iter()
                .map(|r| if one_d { r[0] } else { r[1] })
                .collect::<Vec<_>>()
        })
        .collect();
    let f = Frame::from_bounds(xs.iter().copied(), ys.iter().copied())?;
    let mut svg = open_svg(title);
    let (xl, yl) = if one_d { ("t", "x") } else { ("x1", "x2") };
    axes(&mut svg, &f, xl, yl);
    for (i, s) in dataset.snapshots.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for r in s.rows() {
            let (px, py) = if one_d {
                (f.px(dataset.times[i]), f.py(r[0]))
            } else {
                (f.px(r[0]), f.py(r[1]))
            };
            let _ = write!(
                svg,
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"{color}\" \
                 fill-opacity=\"0.6\"/>\n"
            );
        }
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"{color}\">t={}</text>\n",
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            dataset.times[i],
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Trajectory fan: one polyline per particle (up to `max_particles`),
/// first two coordinates; 1-D trajectories are drawn against time.
pub fn plot_trajectories(
    bundle: &TrajectoryBundle,
    max_particles: usize,
    title: &str,
) -> Result<String> {
    if bundle.states.is_empty() {
        return Err(WlfError::contract("trajectory bundle is empty"));
    }
    let n = bundle.states[0].nrows().min(max_particles);
    let d = bundle.states[0].ncols();
    let one_d = d == 1;
    let point = |k: usize, p: usize| -> (f64, f64) {
        if one_d {
            (bundle.times[k], bundle.states[k][(p, 0)])
        } else {
            (bundle.states[k][(p, 0)], bundle.states[k][(p, 1)])
        }
    };
    let steps = bundle.states.len();
    let all: Vec<(f64, f64)> = (0..n)
        .flat_map(|p| (0..steps).map(move |k| (k, p)))
        .map(|(k, p)| point(k, p))
        .collect();
    let f = Frame::from_bounds(all.iter().map(|v| v.0), all.iter().map(|v| v.1))?;
    let mut svg = open_svg(title);
    let (xl, yl) = if one_d { ("t", "x") } else { ("x1", "x2") };
    axes(&mut svg, &f, xl, yl);
    for p in 0..n {
        let color = PALETTE[p % PALETTE.len()];
        let pts: Vec<String> = (0..steps)
            .map(|k| {
                let (x, y) = point(k, p);
                format!("{:.2},{:.2}", f.px(x), f.py(y))
            })
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"1\" stroke-opacity=\"0.7\"/>\n",
            pts.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
