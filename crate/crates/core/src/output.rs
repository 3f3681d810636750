//! Artifact writers. Floating-point values in CSV and text artifacts use 17
//! significant digits so reruns can be compared byte for byte.

use std::io::{self, Write};

use serde::Serialize;

use crate::channel::SampledCir;
use crate::pipeline::LinkSimulation;
use crate::scene::Scenario;
use crate::sensing::Heatmap;

/// Formats `v` with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_heatmap_csv<W: Write>(h: &Heatmap, mut out: W) -> io::Result<()> {
    writeln!(out, "x_meters,y_meters,value")?;
    for (i, v) in h.values.iter().enumerate() {
        let c = h.grid.cell_center(i);
        writeln!(out, "{},{},{}", fmt17(c.x), fmt17(c.y), fmt17(*v))?;
    }
    out.flush()
}

/// Linear mapping used for the 16-bit image: `value = pixel * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PgmScale {
    pub max_value: f64,
    pub scale: f64,
}

/// Binary 16-bit PGM (P5, big-endian samples). Rows are written from the
/// highest grid row down so the image appears with +y upwards.
pub fn write_heatmap_pgm<W: Write>(h: &Heatmap, mut out: W) -> io::Result<PgmScale> {
    let (w, rows) = (h.grid.width, h.grid.height);
    let max_value = h.max();
    let scale = max_value / 65535.0;
    write!(out, "P5\n{w} {rows}\n65535\n")?;
    let mut buf = Vec::with_capacity(w * rows * 2);
    for row in (0..rows).rev() {
        for v in &h.values[row * w..(row + 1) * w] {
            let pixel = if max_value > 0.0 {
                (v / max_value * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            buf.extend_from_slice(&pixel.to_be_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(PgmScale { max_value, scale })
}

pub fn write_pgm_sidecar<W: Write>(h: &Heatmap, scale: &PgmScale, mut out: W) -> io::Result<()> {
    writeln!(out, "# value = pixel * scale")?;
    writeln!(out, "scale={}", fmt17(scale.scale))?;
    writeln!(out, "max_value={}", fmt17(scale.max_value))?;
    writeln!(out, "width={}", h.grid.width)?;
    writeln!(out, "height={}", h.grid.height)?;
    writeln!(out, "origin_x={}", fmt17(h.grid.origin.x))?;
    writeln!(out, "origin_y={}", fmt17(h.grid.origin.y))?;
    writeln!(out, "cell_size={}", fmt17(h.grid.cell_size))?;
    writeln!(out, "first_row=top (max y)")?;
    out.flush()
}

pub fn write_cir_csv<W: Write>(cir: &SampledCir, mut out: W) -> io::Result<()> {
    writeln!(out, "n,t_n_seconds,real,imag,magnitude")?;
    for (n, v) in cir.values.iter().enumerate() {
        writeln!(
            out,
            "{n},{},{},{},{}",
            fmt17(cir.sample_time(n)),
            fmt17(v.re),
            fmt17(v.im),
            fmt17(v.norm())
        )?;
    }
    out.flush()
}

#[derive(Serialize)]
struct PathDump<'a> {
    order: usize,
    surfaces: &'a [usize],
    reflection_points: Vec<[f64; 3]>,
    length: f64,
}

#[derive(Serialize)]
struct LinkDump<'a> {
    tx: &'a str,
    rx: &'a str,
    paths: Vec<PathDump<'a>>,
}

pub fn write_paths_json<W: Write>(scenario: &Scenario, links: &[LinkSimulation], mut out: W) -> io::Result<()> {
    let dump: Vec<LinkDump> = links
        .iter()
        .map(|l| LinkDump {
            tx: &scenario.nodes[l.tx].id,
            rx: &scenario.nodes[l.rx].id,
            paths: l
                .paths
                .iter()
                .map(|p| PathDump {
                    order: p.order(),
                    surfaces: &p.surfaces_hit,
                    reflection_points: p.reflection_points.iter().map(|q| [q.x, q.y, q.z]).collect(),
                    length: p.total_length,
                })
                .collect(),
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &dump).map_err(io::Error::other)?;
    writeln!(out)?;
    out.flush()
}
