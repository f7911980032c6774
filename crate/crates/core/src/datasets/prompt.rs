use serde::{Deserialize, Serialize};

use crate::describe::SERIES_SLOT;
use crate::error::{Error, Result};
use crate::synth::NormalizedSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Text(String),
    Series(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub length: usize,
    pub value_scaling: f64,
    pub value_offset: f64,
}

impl SeriesMeta {
    pub fn of(name: &str, n: &NormalizedSeries) -> Self {
        Self {
            name: name.to_string(),
            length: n.values.len(),
            value_scaling: n.value_scaling,
            value_offset: n.value_offset,
        }
    }

    /// Metadata line placed in front of the series placeholder. Numbers
    /// are printed in shortest round-trip form.
    pub fn header(&self) -> String {
        format!(
            "[series {}: length {}, value scaling {}, value offset {}]",
            self.name, self.length, self.value_scaling, self.value_offset
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub segments: Vec<Segment>,
    pub series: Vec<SeriesMeta>,
}

/// Splits `question` at each series slot. Text around the slots is kept
/// verbatim, including empty leading or trailing pieces.
pub fn assemble_prompt(question: &str, series: &[SeriesMeta]) -> Result<PromptDocument> {
    let pieces: Vec<&str> = question.split(SERIES_SLOT).collect();
    let slots = pieces.len() - 1;
    if slots != series.len() {
        return Err(Error::arg(format!(
            "question has {slots} series slot(s) but {} series were given",
            series.len()
        )));
    }
    let mut segments = Vec::with_capacity(2 * slots + 1);
    for (i, piece) in pieces.iter().enumerate() {
        segments.push(Segment::Text(piece.to_string()));
        if i < slots {
            segments.push(Segment::Series(i));
        }
    }
    Ok(PromptDocument {
        segments,
        series: series.to_vec(),
    })
}

impl PromptDocument {
    /// Series references must appear once each, in order.
    pub fn validate(&self) -> Result<()> {
        let refs: Vec<usize> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Series(i) => Some(*i),
                Segment::Text(_) => None,
            })
            .collect();
        if refs != (0..self.series.len()).collect::<Vec<_>>() {
            return Err(Error::invalid(format!(
                "series references {refs:?} do not cover {} series in order",
                self.series.len()
            )));
        }
        Ok(())
    }

    fn render(&self, mut body: impl FnMut(usize) -> String) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => out.push_str(t),
                Segment::Series(i) => {
                    out.push_str(&self.series[*i].header());
                    out.push(' ');
                    out.push_str(&body(*i));
                }
            }
        }
        out
    }

    /// Flat text with one placeholder per series.
    pub fn flat(&self) -> String {
        self.render(|_| SERIES_SLOT.to_string())
    }

    /// Text form for models that read series as text: normalized values
    /// are written out in place of each placeholder.
    pub fn inline(&self, values: &[&[f64]]) -> Result<String> {
        if values.len() != self.series.len() {
            return Err(Error::arg(format!("{} value arrays for {} series", values.len(), self.series.len())));
        }
        Ok(self.render(|i| {
            let v: Vec<String> = values[i].iter().map(|x| format!("{x:.4}")).collect();
            format!("[{}]", v.join(", "))
        }))
    }
}
