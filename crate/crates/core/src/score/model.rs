use num_rational::Rational64;

/// Lengths and positions in quarter notes.
pub type Quarters = Rational64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoteEvent {
    pub onset: Quarters,
    pub duration: Quarters,
    /// MIDI pitch, `None` for a rest.
    pub pitch: Option<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Measure {
    /// Sorted by onset.
    pub events: Vec<NoteEvent>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Part {
    pub measures: Vec<Measure>,
}

/// Parts in spine order; every part has one entry per measure.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Score {
    pub parts: Vec<Part>,
    pub measure_lengths: Vec<Quarters>,
}

impl Score {
    pub fn measure_count(&self) -> usize {
        self.measure_lengths.len()
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn pitched_events(&self) -> impl Iterator<Item = (u8, &NoteEvent)> {
        self.parts
            .iter()
            .flat_map(|p| p.measures.iter())
            .flat_map(|m| m.events.iter())
            .filter_map(|e| e.pitch.map(|p| (p, e)))
    }

    /// Apply `f` to every pitch.
    pub fn map_pitches(&self, mut f: impl FnMut(u8) -> u8) -> Score {
        let mut out = self.clone();
        for e in out
            .parts
            .iter_mut()
            .flat_map(|p| p.measures.iter_mut())
            .flat_map(|m| m.events.iter_mut())
        {
            e.pitch = e.pitch.map(&mut f);
        }
        out
    }
}
