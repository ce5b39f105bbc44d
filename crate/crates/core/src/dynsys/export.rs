//! CSV export of trajectories.
//!
//! Samples: `t,x_1,…,x_N[,V]`, one row per sample. Switch events:
//! `t,index,from,to` with zero-based indices and set names `plus`, `zero`,
//! `neg`.

use std::io::Write;

use super::Trajectory;
use crate::error::Result;

impl Trajectory {
    pub fn write_samples_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let with_v = self
            .lyapunov
            .as_ref()
            .is_some_and(|v| v.len() == self.samples.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        if with_v {
            header.push("V".to_string());
        }
        w.write_record(&header)?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = Vec::with_capacity(n + 2);
            row.push(s.t.to_string());
            row.extend(s.x.iter().map(f64::to_string));
            if with_v {
                row.push(self.lyapunov.as_ref().unwrap()[k].1.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "index", "from", "to"])?;
        for e in &self.switch_events {
            w.write_record([
                e.t.to_string(),
                e.index.to_string(),
                e.from.to_string(),
                e.to.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
