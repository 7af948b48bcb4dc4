//! Event catalogs: per-process lists of space-time events observed in a
//! rectangular window `[-S_X, S_X] x [-S_Y, S_Y] x [0, T]`.
//!
//! Catalogs are read from and written to a plain CSV layout with the header
//! `process,x,y,t`. Coordinates are taken as-is; callers pre-scale raw
//! longitude/latitude/day values into model units.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single space-time event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Event {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }
}

/// Observation window `[-half_x, half_x] x [-half_y, half_y] x [0, horizon]`.
/// The window is closed: events on the boundary are inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub half_x: f64,
    pub half_y: f64,
    pub horizon: f64,
}

impl Window {
    pub fn new(half_x: f64, half_y: f64, horizon: f64) -> Result<Self> {
        for (name, v) in [("S_X", half_x), ("S_Y", half_y), ("T", horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "window bound {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            half_x,
            half_y,
            horizon,
        })
    }

    pub fn contains(&self, e: &Event) -> bool {
        e.x >= -self.half_x
            && e.x <= self.half_x
            && e.y >= -self.half_y
            && e.y <= self.half_y
            && e.t >= 0.0
            && e.t <= self.horizon
    }

    /// Lebesgue volume of the window.
    pub fn volume(&self) -> f64 {
        4.0 * self.half_x * self.half_y * self.horizon
    }
}

/// Multivariate event catalog. Immutable after construction; each process is
/// sorted by time and every event lies inside the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    processes: Vec<Vec<Event>>,
    window: Window,
}

impl Catalog {
    /// Validates and sorts the events. Requires at least one process.
    pub fn new(mut processes: Vec<Vec<Event>>, window: Window) -> Result<Self> {
        if processes.is_empty() {
            return Err(Error::Empty("catalog needs at least one process".into()));
        }
        for (p, events) in processes.iter().enumerate() {
            for (n, e) in events.iter().enumerate() {
                if !(e.x.is_finite() && e.y.is_finite() && e.t.is_finite()) {
                    return Err(Error::OutOfWindow(format!(
                        "process {p} event {n} has non-finite coordinates ({}, {}, {})",
                        e.x, e.y, e.t
                    )));
                }
                if !window.contains(e) {
                    return Err(Error::OutOfWindow(format!(
                        "process {p} event {n} at ({}, {}, {}) outside [-{}, {}] x [-{}, {}] x [0, {}]",
                        e.x,
                        e.y,
                        e.t,
                        window.half_x,
                        window.half_x,
                        window.half_y,
                        window.half_y,
                        window.horizon
                    )));
                }
            }
        }
        for events in processes.iter_mut() {
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        Ok(Self { processes, window })
    }

    /// An empty catalog with `dim` processes.
    pub fn empty(dim: usize, window: Window) -> Result<Self> {
        Self::new(vec![Vec::new(); dim], window)
    }

    pub fn dim(&self) -> usize {
        self.processes.len()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn process(&self, i: usize) -> &[Event] {
        &self.processes[i]
    }

    pub fn processes(&self) -> &[Vec<Event>] {
        &self.processes
    }

    /// Event counts `N_T^i` per process.
    pub fn counts(&self) -> Vec<usize> {
        self.processes.iter().map(Vec::len).collect()
    }

    /// Total number of events over all processes.
    pub fn len(&self) -> usize {
        self.processes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads a catalog from a `process,x,y,t` CSV file. The number of
    /// processes is one more than the largest process id found.
    pub fn load_csv(path: impl AsRef<Path>, window: Window) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, window, None)
    }

    /// Reads CSV from any reader. With `dim = Some(d)` process ids must lie
    /// in `[0, d)`; otherwise `d` is inferred.
    pub fn read_csv<R: Read>(reader: R, window: Window, dim: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["process", "x", "y", "t"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header `process,x,y,t`, found `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }

        let mut rows: Vec<(usize, Event)> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            if record.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", record.len()),
                });
            }
            let process: usize = record[0].parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid process id `{}`", &record[0]),
            })?;
            let mut coords = [0.0f64; 3];
            for (k, c) in coords.iter_mut().enumerate() {
                *c = record[k + 1].parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid number `{}`", &record[k + 1]),
                })?;
            }
            let event = Event::new(coords[0], coords[1], coords[2]);
            if !window.contains(&event) {
                return Err(Error::OutOfWindow(format!(
                    "line {line}: process {process} event ({}, {}, {})",
                    event.x, event.y, event.t
                )));
            }
            if let Some(d) = dim {
                if process >= d {
                    return Err(Error::Parse {
                        line,
                        message: format!("process id {process} not in [0, {d})"),
                    });
                }
            }
            rows.push((process, event));
        }
        if rows.is_empty() {
            return Err(Error::Empty("CSV contains no events".into()));
        }
        let d = dim.unwrap_or_else(|| rows.iter().map(|r| r.0).max().unwrap_or(0) + 1);
        let mut processes = vec![Vec::new(); d];
        for (p, e) in rows {
            processes[p].push(e);
        }
        Self::new(processes, window)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Writes rows in process-then-time order. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["process", "x", "y", "t"])?;
        for (p, events) in self.processes.iter().enumerate() {
            for e in events {
                wtr.write_record([
                    p.to_string(),
                    e.x.to_string(),
                    e.y.to_string(),
                    e.t.to_string(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Splits at `fraction * T`. The train side keeps events with
    /// `t <= fraction * T` on the window `[0, fraction * T]`; the test side
    /// holds the rest, shifted so that its window starts at 0.
    pub fn split_temporal(&self, fraction: f64) -> Result<(Catalog, Catalog)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let cut = fraction * self.window.horizon;
        let train_window = Window::new(self.window.half_x, self.window.half_y, cut)?;
        let test_window = Window::new(
            self.window.half_x,
            self.window.half_y,
            self.window.horizon - cut,
        )?;
        let mut train = Vec::with_capacity(self.dim());
        let mut test = Vec::with_capacity(self.dim());
        for events in &self.processes {
            let (a, b): (Vec<Event>, Vec<Event>) = events.iter().partition(|e| e.t <= cut);
            train.push(a);
            test.push(
                b.into_iter()
                    .map(|e| Event::new(e.x, e.y, (e.t - cut).min(test_window.horizon)))
                    .collect(),
            );
        }
        let train = Catalog::new(train, train_window)?;
        let test = Catalog::new(test, test_window)?;
        if train.is_empty() {
            log::warn!("temporal split at {cut}: train side is empty");
        }
        if test.is_empty() {
            log::warn!("temporal split at {cut}: test side is empty");
        }
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window10() -> Window {
        Window::new(10.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let csv = "process,x,y,t\n0,0.0,0.0,1.0\n0,1.0,-1.0,2.0\n";
        let cat = Catalog::read_csv(csv.as_bytes(), window10(), None).unwrap();
        assert_eq!(cat.dim(), 1);
        assert_eq!(cat.counts(), vec![2]);
        assert_eq!(cat.process(0)[1], Event::new(1.0, -1.0, 2.0));
    }

    #[test]
    fn rejects_out_of_window() {
        let csv = "process,x,y,t\n0,11.0,0.0,1.0\n";
        let err = Catalog::read_csv(csv.as_bytes(), window10(), None).unwrap_err();
        assert!(matches!(err, Error::OutOfWindow(_)), "{err}");
        assert!(err.to_string().contains("11"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "process,x,y,t\n0,1.0,0.0,1.0\n0,abc,0.0,1.0\n";
        match Catalog::read_csv(csv.as_bytes(), window10(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let csv = "process,x,y,t\n";
        assert!(matches!(
            Catalog::read_csv(csv.as_bytes(), window10(), None),
            Err(Error::Empty(_))
        ));
        assert!(Catalog::read_csv("".as_bytes(), window10(), None).is_err());
    }

    #[test]
    fn boundary_events_are_accepted() {
        let e = Event::new(10.0, -10.0, 10.0);
        let cat = Catalog::new(vec![vec![e, Event::new(0.0, 0.0, 0.0)]], window10()).unwrap();
        assert_eq!(cat.process(0)[0].t, 0.0);
    }

    #[test]
    fn sorts_by_time() {
        let cat = Catalog::new(
            vec![vec![Event::new(0.0, 0.0, 3.0), Event::new(0.0, 0.0, 1.0)]],
            window10(),
        )
        .unwrap();
        assert_eq!(cat.process(0)[0].t, 1.0);
    }

    #[test]
    fn split_halves() {
        let w = Window::new(1.0, 1.0, 4.0).unwrap();
        let ev = (1..=4).map(|t| Event::new(0.0, 0.0, t as f64)).collect();
        let cat = Catalog::new(vec![ev], w).unwrap();
        let (train, test) = cat.split_temporal(0.5).unwrap();
        let tt: Vec<f64> = train.process(0).iter().map(|e| e.t).collect();
        let st: Vec<f64> = test.process(0).iter().map(|e| e.t).collect();
        assert_eq!(tt, vec![1.0, 2.0]);
        assert_eq!(st, vec![1.0, 2.0]);
        assert_eq!(train.window().horizon, 2.0);
        assert_eq!(test.window().horizon, 2.0);
    }

    #[test]
    fn split_with_empty_test_side() {
        let w = Window::new(1.0, 1.0, 1.0).unwrap();
        let cat = Catalog::new(vec![vec![Event::new(0.0, 0.0, 0.5)]], w).unwrap();
        let (train, test) = cat.split_temporal(0.999).unwrap();
        assert_eq!(train.len(), 1);
        assert!(test.is_empty());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let cat = Catalog::empty(1, window10()).unwrap();
        assert!(cat.split_temporal(0.0).is_err());
        assert!(cat.split_temporal(1.0).is_err());
        assert!(cat.split_temporal(f64::NAN).is_err());
    }
}
