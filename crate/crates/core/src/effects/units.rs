use std::collections::BTreeMap;

use serde::Deserialize;

use super::{csv_error, require_columns, EffectRecord, EffectsError};

/// Linear conversions `value · multiplier + offset` into mg/L.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRegistry {
    units: BTreeMap<String, (f64, f64)>,
}

impl Default for UnitRegistry {
    /// Common aqueous concentration units.
    fn default() -> Self {
        let mut r = Self::empty();
        for (u, m) in [
            ("mg/L", 1.0),
            ("mg/l", 1.0),
            ("ppm", 1.0),
            ("g/L", 1e3),
            ("µg/L", 1e-3),
            ("μg/L", 1e-3),
            ("ug/L", 1e-3),
            ("ppb", 1e-3),
            ("ng/L", 1e-6),
        ] {
            r.insert(u, m, 0.0).expect("positive multiplier");
        }
        r
    }
}

impl UnitRegistry {
    pub fn empty() -> Self {
        Self { units: BTreeMap::new() }
    }

    pub fn insert(&mut self, unit: &str, multiplier: f64, offset: f64) -> Result<(), EffectsError> {
        if !(multiplier > 0.0 && multiplier.is_finite() && offset.is_finite()) {
            return Err(EffectsError::Parse {
                row: 0,
                reason: format!("unit {unit:?}: multiplier must be positive and finite"),
            });
        }
        self.units.insert(unit.trim().to_owned(), (multiplier, offset));
        Ok(())
    }

    pub fn get(&self, unit: &str) -> Option<(f64, f64)> {
        self.units.get(unit.trim()).copied()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Converts a value into mg/L.
    pub fn to_mg_per_l(&self, value: f64, unit: &str) -> Result<f64, EffectsError> {
        let (m, o) = self.get(unit).ok_or_else(|| EffectsError::UnknownUnit {
            unit: unit.to_owned(),
            known: self.units.keys().cloned().collect::<Vec<_>>().join(", "),
        })?;
        Ok(value * m + o)
    }
}

#[derive(Deserialize)]
struct Row {
    unit: String,
    multiplier: f64,
    #[serde(default)]
    offset: f64,
}

/// Reads a `unit,multiplier,offset` CSV on top of an empty registry.
pub fn parse_unit_registry(text: &str) -> Result<UnitRegistry, EffectsError> {
    let mut reg = UnitRegistry::empty();
    if text.trim().is_empty() {
        return Ok(reg);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    require_columns(rdr.headers().map_err(csv_error)?, &["unit", "multiplier"])?;
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_error)?;
        reg.insert(&row.unit, row.multiplier, row.offset).map_err(|e| match e {
            EffectsError::Parse { reason, .. } => EffectsError::Parse { row: i + 2, reason },
            other => other,
        })?;
    }
    Ok(reg)
}

/// Returns the record with its concentration expressed in mg/L.
pub fn convert_units(rec: &EffectRecord, registry: &UnitRegistry) -> Result<EffectRecord, EffectsError> {
    Ok(EffectRecord {
        concentration: registry.to_mg_per_l(rec.concentration, &rec.unit)?,
        unit: "mg/L".to_owned(),
        ..rec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(c: f64, unit: &str) -> EffectRecord {
        EffectRecord {
            chemical: "c".into(),
            species: "s".into(),
            concentration: c,
            unit: unit.into(),
            endpoint: "LC50".into(),
            effect: "MOR".into(),
        }
    }

    #[test]
    fn conversions() {
        let r = UnitRegistry::default();
        let v = convert_units(&rec(110000.0, "µg/L"), &r).unwrap().concentration;
        assert!((v - 110.0).abs() < 1e-9);
        assert_eq!(convert_units(&rec(5.0, "mg/L"), &r).unwrap().concentration, 5.0);
        let err = convert_units(&rec(1.0, "furlongs"), &r).unwrap_err();
        assert!(err.to_string().contains("furlongs"));
    }

    #[test]
    fn registry_file() {
        let r = parse_unit_registry("unit,multiplier,offset\nmg/L,1,0\nkelvinish,2,3\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.to_mg_per_l(4.0, "kelvinish").unwrap(), 11.0);
        assert!(parse_unit_registry("unit,multiplier,offset\nx,0,0\n").is_err());
        assert!(parse_unit_registry("unit,multiplier,offset\nx,abc,0\n").is_err());
        assert!(parse_unit_registry("unit,offset\nx,0\n").is_err());
    }
}
