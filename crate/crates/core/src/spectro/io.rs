//! Spectrum CSV: a `wavelength_nm` column followed by one column per spectrum,
//! headed `<role>:<id>` (for example `white:ref`, `raw:tick_000042`).

use std::io::{Read, Write};
use std::path::Path;

use super::{Spectrum, SpectrumRole, WavelengthGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumColumn {
    pub role: SpectrumRole,
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub grid: WavelengthGrid,
    pub columns: Vec<SpectrumColumn>,
}

impl SpectrumTable {
    pub fn new(grid: WavelengthGrid) -> Self {
        Self {
            grid,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, spectrum: &Spectrum) -> Result<()> {
        if spectrum.grid != self.grid {
            return Err(Error::InvalidArgument("spectrum grid differs from the table grid".into()));
        }
        let id = id.into();
        if id.contains(',') || id.contains(':') {
            return Err(Error::InvalidArgument(format!("spectrum id `{id}` may not contain ',' or ':'")));
        }
        self.columns.push(SpectrumColumn {
            role: spectrum.role,
            id,
            values: spectrum.values.clone(),
        });
        Ok(())
    }

    pub fn spectrum(&self, column: &SpectrumColumn) -> Spectrum {
        Spectrum {
            grid: self.grid,
            role: column.role,
            values: column.values.clone(),
        }
    }

    /// First column with the given role.
    pub fn find_role(&self, role: SpectrumRole) -> Option<Spectrum> {
        self.columns.iter().find(|c| c.role == role).map(|c| self.spectrum(c))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["wavelength_nm".to_string()];
        header.extend(self.columns.iter().map(|c| format!("{}:{}", c.role.tag(), c.id)));
        w.write_record(&header)?;
        for i in 0..self.grid.len {
            let mut row = vec![self.grid.wavelength(i).to_string()];
            row.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("wavelength_nm") {
            return Err(Error::Format("spectrum CSV must start with a wavelength_nm column".into()));
        }
        let mut columns = header
            .iter()
            .skip(1)
            .map(|h| {
                let (role, id) = h
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("column `{h}` is not of the form role:id")))?;
                Ok(SpectrumColumn {
                    role: SpectrumRole::from_tag(role)?,
                    id: id.to_string(),
                    values: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut wavelengths = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
            wavelengths.push(parse(&record[0])?);
            for (c, field) in columns.iter_mut().zip(record.iter().skip(1)) {
                c.values.push(parse(field)?);
            }
        }
        if wavelengths.len() < 2 {
            return Err(Error::Format("spectrum CSV needs at least two wavelengths".into()));
        }
        let step = wavelengths[1] - wavelengths[0];
        let grid = WavelengthGrid::new(wavelengths[0], step, wavelengths.len())?;
        for (i, &l) in wavelengths.iter().enumerate() {
            if (l - grid.wavelength(i)).abs() > 1e-6 * step.abs().max(1.0) {
                return Err(Error::Format(format!("wavelength grid is not uniform at row {}", i + 1)));
            }
        }
        Ok(Self { grid, columns })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = WavelengthGrid::new(468.0, 1.0, 5).unwrap();
        let mut t = SpectrumTable::new(grid);
        t.push("ref", &Spectrum::constant(grid, SpectrumRole::White, 1000.0)).unwrap();
        t.push("ref", &Spectrum::constant(grid, SpectrumRole::Dark, 50.0)).unwrap();
        let raw = Spectrum::new(grid, SpectrumRole::Raw, vec![0.1 + 0.2, 1.0 / 3.0, 512.25, -0.0, 7e-300]).unwrap();
        t.push("tick_000001", &raw).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("wavelength_nm,white:ref,dark:ref,raw:tick_000001\n"));
        let back = SpectrumTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.find_role(SpectrumRole::Raw).unwrap(), raw);
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(SpectrumTable::read_csv("nm,raw:a\n1,2\n2,3\n".as_bytes()).is_err());
        assert!(SpectrumTable::read_csv("wavelength_nm,a\n1,2\n2,3\n".as_bytes()).is_err());
        assert!(SpectrumTable::read_csv("wavelength_nm,foo:a\n1,2\n2,3\n".as_bytes()).is_err());
        assert!(SpectrumTable::read_csv("wavelength_nm,raw:a\n1,2\n2,3\n4,5\n".as_bytes()).is_err());
    }
}
