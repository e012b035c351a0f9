//! Text world format:
//!
//! ```text
//! resolution = 0.05
//! origin_x = 0
//! origin_y = 0
//! width = 4
//! height = 2
//! seed = 7
//! ---
//! 0010
//! 0000
//! ```
//!
//! Grid rows are written top (largest `y`) first so the file reads like the
//! map; `1` marks an occupied cell. Floats use the shortest representation
//! that round-trips, so `save(load(f)) == f` for files written by `save`.

use std::fmt::Write as _;
use std::path::Path;

use super::Costmap;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Serialise a ground-truth map.
pub fn write_world(map: &Costmap) -> String {
    let mut out = String::new();
    let o = map.origin();
    let _ = writeln!(out, "resolution = {}", map.resolution());
    let _ = writeln!(out, "origin_x = {}", o.x);
    let _ = writeln!(out, "origin_y = {}", o.y);
    let _ = writeln!(out, "width = {}", map.width());
    let _ = writeln!(out, "height = {}", map.height());
    let _ = writeln!(out, "seed = {}", map.seed());
    out.push_str("---\n");
    for j in (0..map.height()).rev() {
        for i in 0..map.width() {
            out.push(if map.is_occupied(i as i64, j as i64) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Parse the text world format into a fully observed map.
pub fn parse_world(text: &str) -> Result<Costmap> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text.lines().enumerate();
    let (mut res, mut ox, mut oy, mut w, mut h, mut seed) = (None, None, None, None, None, None);
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(perr(0, "missing '---' separator".into()));
        };
        let line = line.trim();
        if line == "---" {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| perr(n + 1, format!("expected 'key = value', got '{line}'")))?;
        let v = v.trim();
        let float = || v.parse::<f64>().map_err(|e| perr(n + 1, format!("{k}: {e}")));
        let uint = || v.parse::<u64>().map_err(|e| perr(n + 1, format!("{k}: {e}")));
        match k.trim() {
            "resolution" => res = Some(float()?),
            "origin_x" => ox = Some(float()?),
            "origin_y" => oy = Some(float()?),
            "width" => w = Some(uint()? as usize),
            "height" => h = Some(uint()? as usize),
            "seed" => seed = Some(uint()?),
            other => return Err(perr(n + 1, format!("unknown key '{other}'"))),
        }
    }
    let missing = |k: &str| perr(0, format!("missing header key '{k}'"));
    let res = res.ok_or_else(|| missing("resolution"))?;
    if !(res > 0.0) || !res.is_finite() {
        return Err(perr(0, format!("resolution must be positive, got {res}")));
    }
    let origin = Vec2::new(ox.ok_or_else(|| missing("origin_x"))?, oy.ok_or_else(|| missing("origin_y"))?);
    let (w, h) = (w.ok_or_else(|| missing("width"))?, h.ok_or_else(|| missing("height"))?);
    let mut map = Costmap::new_free(res, origin, w, h);
    map.set_seed(seed.ok_or_else(|| missing("seed"))?);
    let mut row = 0;
    for (n, line) in lines {
        if row == h {
            if line.trim().is_empty() {
                continue;
            }
            return Err(perr(n + 1, format!("more than {h} grid rows")));
        }
        if line.len() != w {
            return Err(perr(n + 1, format!("row has {} cells, expected {w}", line.len())));
        }
        let j = h - 1 - row;
        for (i, c) in line.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => map.set(i, j, 1.0),
                _ => return Err(perr(n + 1, format!("bad cell character '{}'", c as char))),
            }
        }
        row += 1;
    }
    if row != h {
        return Err(perr(0, format!("expected {h} grid rows, found {row}")));
    }
    Ok(map)
}

pub fn load_world(path: impl AsRef<Path>) -> Result<Costmap> {
    parse_world(&std::fs::read_to_string(path)?)
}

pub fn save_world(map: &Costmap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_world(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::generate_world;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = generate_world(5, 0.3, (6.0, 4.0)).unwrap();
        m.set_seed(5);
        let text = write_world(&m);
        let back = parse_world(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_world(&back), text);
    }

    #[test]
    fn odd_origin_round_trips() {
        let mut m = Costmap::new_free(0.1 + 0.2, Vec2::new(-1.0 / 3.0, 1e-17), 3, 2);
        m.set(2, 1, 1.0);
        let back = parse_world(&write_world(&m)).unwrap();
        assert_eq!(back.resolution().to_bits(), m.resolution().to_bits());
        assert_eq!(back.origin().x.to_bits(), m.origin().x.to_bits());
        assert_eq!(back, m);
    }

    #[test]
    fn top_row_first() {
        let text = "resolution = 1\norigin_x = 0\norigin_y = 0\nwidth = 2\nheight = 2\nseed = 0\n---\n10\n00\n";
        let m = parse_world(text).unwrap();
        assert!(m.is_occupied(0, 1));
        assert!(!m.is_occupied(0, 0));
        assert_eq!(write_world(&m), text);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let head = "resolution = 1\norigin_x = 0\norigin_y = 0\nwidth = 2\nheight = 1\nseed = 0\n";
        assert!(parse_world(&format!("{head}---\n012\n")).is_err());
        assert!(parse_world(&format!("{head}---\n02\n")).is_err());
        assert!(parse_world(&format!("{head}---\n")).is_err());
        assert!(parse_world(&format!("{head}colour = 3\n---\n00\n")).is_err());
        assert!(parse_world("width = 2\n---\n00\n").is_err());
    }
}
