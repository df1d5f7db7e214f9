//! SVG figures of a run: velocity tracking, tilt and pitch, roll and yaw,
//! actuator commands and the ground track.

use anyhow::{anyhow, Result};
use plotters::prelude::*;
use std::path::{Path, PathBuf};
use tiltrotor_core::sim::LogRecord;

const SIZE: (u32, u32) = (900, 500);
/// Plot every n-th record; the log runs at the plant rate.
const STRIDE: usize = 4;
const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, dashed: false }
    }

    fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series>,
    /// Vertical rule, e.g. the failure instant.
    pub marker: Option<(f64, &'a str)>,
    /// Equal scales on both axes.
    pub equal_axes: bool,
}

fn bounds(series: &[Series], marker: Option<f64>) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some(m) = marker {
        x0 = x0.min(m);
        x1 = x1.max(m);
    }
    if !x0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    let pad = |a: f64, b: f64| {
        let span = (b - a).max(1e-3);
        (a - 0.05 * span, b + 0.05 * span)
    };
    (pad(x0, x1), pad(y0, y1))
}

fn widen_to_equal(x: (f64, f64), y: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    let aspect = SIZE.0 as f64 / SIZE.1 as f64;
    let (wx, wy) = (x.1 - x.0, y.1 - y.0);
    if wx / wy < aspect {
        let c = 0.5 * (x.0 + x.1);
        let h = 0.5 * wy * aspect;
        ((c - h, c + h), y)
    } else {
        let c = 0.5 * (y.0 + y.1);
        let h = 0.5 * wx / aspect;
        (x, (c - h, c + h))
    }
}

fn draw<DB: DrawingBackend>(area: &DrawingArea<DB, plotters::coord::Shift>, chart: &Chart) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let (mut xr, mut yr) = bounds(&chart.series, chart.marker.map(|m| m.0));
    if chart.equal_axes {
        (xr, yr) = widen_to_equal(xr, yr);
    }
    let mut ctx = ChartBuilder::on(area)
        .caption(chart.title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(|e| anyhow!("{e}"))?;
    ctx.configure_mesh().x_desc(chart.x_label).y_desc(chart.y_label).draw().map_err(|e| anyhow!("{e}"))?;
    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = s.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite());
        let anno = if s.dashed {
            ctx.draw_series(DashedLineSeries::new(pts, 6, 4, color.stroke_width(2)))
        } else {
            ctx.draw_series(LineSeries::new(pts, color.stroke_width(2)))
        }
        .map_err(|e| anyhow!("{e}"))?;
        anno.label(s.label.as_str())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    if let Some((t, label)) = chart.marker {
        ctx.draw_series(LineSeries::new([(t, yr.0), (t, yr.1)], BLACK.stroke_width(1)))
            .map_err(|e| anyhow!("{e}"))?
            .label(label)
            .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLACK));
    }
    if !chart.series.is_empty() {
        ctx.configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    Ok(())
}

/// Writes charts stacked vertically into one SVG file.
pub fn write_svg(path: &Path, charts: &[Chart]) -> Result<()> {
    let size = (SIZE.0, SIZE.1 * charts.len().max(1) as u32);
    let root = SVGBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let panels = root.split_evenly((charts.len().max(1), 1));
    for (area, chart) in panels.iter().zip(charts) {
        draw(area, chart)?;
    }
    root.present().map_err(|e| anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

fn series(log: &[LogRecord], label: &str, f: impl Fn(&LogRecord) -> f64) -> Series {
    Series::new(label, log.iter().step_by(STRIDE).map(|r| (r.t, f(r))).collect())
}

fn failure_marker(log: &[LogRecord]) -> Option<(f64, &'static str)> {
    log.iter().find(|r| r.failure_active).map(|r| (r.t, "failure"))
}

/// One figure per family; returns the files written.
pub fn emit_plots(log: &[LogRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let deg = f64::to_degrees;
    let marker = failure_marker(log);
    let time = "time [s]";
    let mut written = Vec::new();
    let mut emit = |name: &str, charts: Vec<Chart>| -> Result<()> {
        let path = out_dir.join(name);
        write_svg(&path, &charts)?;
        written.push(path);
        Ok(())
    };

    emit(
        "velocity.svg",
        vec![Chart {
            title: "Velocity tracking",
            x_label: time,
            y_label: "velocity [m/s]",
            series: vec![
                series(log, "v_x", |r| r.v.x),
                series(log, "v_sp_x", |r| r.v_sp.x).dashed(),
                series(log, "v_y", |r| r.v.y),
                series(log, "v_sp_y", |r| r.v_sp.y).dashed(),
                series(log, "v_z", |r| r.v.z),
                series(log, "v_sp_z", |r| r.v_sp.z).dashed(),
            ],
            marker,
            equal_axes: false,
        }],
    )?;

    let mut tilt: Vec<Series> = (0..4).map(|i| series(log, &format!("tilt_{}", i + 1), |r| deg(r.tilt[i]))).collect();
    tilt.push(series(log, "pitch", |r| deg(r.attitude.y)));
    tilt.push(series(log, "pitch_sp", |r| deg(r.attitude_sp.y)).dashed());
    emit(
        "tilt_pitch.svg",
        vec![Chart {
            title: "Rotor tilt and pitch",
            x_label: time,
            y_label: "angle [deg]",
            series: tilt,
            marker,
            equal_axes: false,
        }],
    )?;

    emit(
        "roll_yaw.svg",
        vec![Chart {
            title: "Roll and yaw",
            x_label: time,
            y_label: "angle [deg]",
            series: vec![
                series(log, "roll", |r| deg(r.attitude.x)),
                series(log, "roll_sp", |r| deg(r.attitude_sp.x)).dashed(),
                series(log, "yaw", |r| deg(r.attitude.z)),
                series(log, "yaw_sp", |r| deg(r.attitude_sp.z)).dashed(),
            ],
            marker,
            equal_axes: false,
        }],
    )?;

    let names = ["aileron_l", "aileron_r", "elevator", "rudder"];
    let mut actuators: Vec<Series> =
        (0..4).map(|i| series(log, &format!("rotor_{}", i + 1), |r| r.rotor_cmd[i])).collect();
    actuators.extend((0..4).map(|i| series(log, names[i], |r| r.surfaces[i]).dashed()));
    let servos = (0..4).map(|i| series(log, &format!("tilt_cmd_{}", i + 1), |r| deg(r.tilt_cmd[i]))).collect();
    emit(
        "commands.svg",
        vec![
            Chart {
                title: "Motor and surface commands",
                x_label: time,
                y_label: "command [-]",
                series: actuators,
                marker,
                equal_axes: false,
            },
            Chart {
                title: "Servo commands",
                x_label: time,
                y_label: "tilt command [deg]",
                series: servos,
                marker,
                equal_axes: false,
            },
        ],
    )?;

    // North up, east right.
    let track = log.iter().step_by(STRIDE).map(|r| (r.position.y, r.position.x)).collect();
    emit(
        "trajectory.svg",
        vec![Chart {
            title: "Ground track",
            x_label: "east [m]",
            y_label: "north [m]",
            series: vec![Series::new("path", track)],
            marker: None,
            equal_axes: true,
        }],
    )?;
    Ok(written)
}

/// Overlay of several runs of the same scenario.
pub fn emit_overlay(runs: &[(&str, &[LogRecord])], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let Some((_, first)) = runs.first() else {
        return Ok(Vec::new());
    };
    let mut vx = vec![series(first, "v_sp_x", |r| r.v_sp.x).dashed()];
    let mut vz = Vec::new();
    let mut pitch = Vec::new();
    for (name, log) in runs {
        vx.push(series(log, &format!("v_x {name}"), |r| r.v.x));
        vz.push(series(log, &format!("v_z {name}"), |r| r.v.z));
        pitch.push(series(log, &format!("pitch {name}"), |r| r.attitude.y.to_degrees()));
    }
    let time = "time [s]";
    let velocity = out_dir.join("compare_velocity.svg");
    write_svg(
        &velocity,
        &[
            Chart {
                title: "Forward velocity",
                x_label: time,
                y_label: "v_x [m/s]",
                series: vx,
                marker: None,
                equal_axes: false,
            },
            Chart {
                title: "Vertical velocity",
                x_label: time,
                y_label: "v_z [m/s]",
                series: vz,
                marker: None,
                equal_axes: false,
            },
        ],
    )?;
    let pitch_path = out_dir.join("compare_pitch.svg");
    write_svg(
        &pitch_path,
        &[Chart {
            title: "Pitch",
            x_label: time,
            y_label: "pitch [deg]",
            series: pitch,
            marker: None,
            equal_axes: false,
        }],
    )?;
    Ok(vec![velocity, pitch_path])
}
