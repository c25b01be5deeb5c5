use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{convert_units, csv_error, read_text, require_columns, EffectRecord, EffectsError, UnitRegistry};

/// A binary-labelled effect `(c, s, κ, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub chemical: String,
    pub species: String,
    /// mg/L before [`log_normalize`], log10(mg/L) after.
    #[serde(rename = "log_concentration")]
    pub concentration: f64,
    pub label: u8,
}

/// 1 for lethal endpoints: `LC*`, `LD*`, `NR-LETH`, or `EC*` measured on mortality.
pub fn binarize_label(endpoint: &str, effect: &str) -> u8 {
    let ep = endpoint.trim().trim_end_matches(['*', '/']).to_ascii_uppercase();
    let eff = effect.trim().to_ascii_uppercase();
    let mortality = eff == "MOR" || eff.contains("MORTALITY");
    let lethal = ep.starts_with("LC") || ep.starts_with("LD") || ep == "NR-LETH" || (ep.starts_with("EC") && mortality);
    u8::from(lethal)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One sample per `(chemical, species, label)` with the median concentration; groups keep
/// the order of their first occurrence.
pub fn dedup_median(samples: &[Sample]) -> Vec<Sample> {
    let mut order: Vec<(String, String, u8)> = Vec::new();
    let mut groups: HashMap<(String, String, u8), Vec<f64>> = HashMap::new();
    for s in samples {
        let key = (s.chemical.clone(), s.species.clone(), s.label);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(s.concentration);
    }
    order
        .into_iter()
        .map(|key| {
            let mut v = groups.remove(&key).expect("group recorded");
            Sample {
                concentration: median(&mut v),
                chemical: key.0,
                species: key.1,
                label: key.2,
            }
        })
        .collect()
}

/// Replaces a mg/L concentration by its base-10 logarithm.
pub fn log_normalize(s: &Sample) -> Result<Sample, EffectsError> {
    if !(s.concentration > 0.0) {
        return Err(EffectsError::NonPositive(s.concentration));
    }
    Ok(Sample {
        concentration: s.concentration.log10(),
        ..s.clone()
    })
}

/// Resolution of effect-file names to graph entity names.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NameMap {
    #[default]
    Any,
    Members(HashSet<String>),
    Mapped(HashMap<String, String>),
}

impl NameMap {
    fn resolve(&self, name: &str) -> Option<String> {
        match self {
            NameMap::Any => Some(name.to_owned()),
            NameMap::Members(set) => set.contains(name).then(|| name.to_owned()),
            NameMap::Mapped(map) => map.get(name).cloned(),
        }
    }
}

/// Keeps only samples whose chemical and species resolve, renaming them to graph entities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntityFilter {
    pub chemicals: NameMap,
    pub species: NameMap,
}

impl EntityFilter {
    pub fn members(chemicals: impl IntoIterator<Item = String>, species: impl IntoIterator<Item = String>) -> Self {
        Self {
            chemicals: NameMap::Members(chemicals.into_iter().collect()),
            species: NameMap::Members(species.into_iter().collect()),
        }
    }

    pub fn mapped(chemicals: HashMap<String, String>, species: HashMap<String, String>) -> Self {
        Self {
            chemicals: NameMap::Mapped(chemicals),
            species: NameMap::Mapped(species),
        }
    }

    pub fn resolve(&self, chemical: &str, species: &str) -> Option<(String, String)> {
        Some((self.chemicals.resolve(chemical)?, self.species.resolve(species)?))
    }
}

/// Full preparation: mg/L conversion, binarisation, entity filtering, median
/// de-duplication and log-normalisation.
pub fn prepare(
    records: &[EffectRecord],
    registry: &UnitRegistry,
    filter: &EntityFilter,
) -> Result<Vec<Sample>, EffectsError> {
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let Some((chemical, species)) = filter.resolve(&r.chemical, &r.species) else {
            continue;
        };
        let mg = convert_units(r, registry)?;
        samples.push(Sample {
            chemical,
            species,
            concentration: mg.concentration,
            label: binarize_label(&r.endpoint, &r.effect),
        });
    }
    dedup_median(&samples).iter().map(log_normalize).collect()
}

pub fn write_samples(samples: &[Sample], w: impl Write) -> Result<(), EffectsError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| EffectsError::Io {
        path: "<samples>".into(),
        message: e.to_string(),
    };
    if samples.is_empty() {
        wtr.write_record(["chemical", "species", "log_concentration", "label"]).map_err(io)?;
    }
    for s in samples {
        wtr.serialize(s).map_err(io)?;
    }
    wtr.flush().map_err(|e| EffectsError::Io {
        path: "<samples>".into(),
        message: e.to_string(),
    })
}

/// Reads the sample CSV written by [`write_samples`].
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>, EffectsError> {
    parse_samples(&read_text(path)?)
}

pub fn parse_samples(text: &str) -> Result<Vec<Sample>, EffectsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    require_columns(
        rdr.headers().map_err(csv_error)?,
        &["chemical", "species", "log_concentration", "label"],
    )?;
    let mut out = Vec::new();
    for (i, s) in rdr.deserialize::<Sample>().enumerate() {
        let s = s.map_err(csv_error)?;
        if s.label > 1 || !s.concentration.is_finite() {
            return Err(EffectsError::Parse {
                row: i + 2,
                reason: "label must be 0/1 and concentration finite".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}
