use super::dataset::Dataset;
use super::sets::DomainLabel;

/// One example in the adversarial training view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairedExample {
    pub domain: DomainLabel,
    /// Index into the originating dataset.
    pub index: usize,
    /// Class label; always `None` for target examples.
    pub label: Option<u8>,
}

/// Source examples tagged 0 followed by target examples tagged 1, with
/// target class labels removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedStream {
    pub examples: Vec<PairedExample>,
}

impl PairedStream {
    pub fn of(&self, domain: DomainLabel) -> impl Iterator<Item = &PairedExample> {
        self.examples.iter().filter(move |e| e.domain == domain)
    }
}

pub fn assign_domain_labels(source: &Dataset, target: &Dataset) -> PairedStream {
    let src = (0..source.len()).map(|i| PairedExample {
        domain: DomainLabel::Source,
        index: i,
        label: source.label(i),
    });
    let tgt = (0..target.len()).map(|i| PairedExample {
        domain: DomainLabel::Target,
        index: i,
        label: None,
    });
    PairedStream {
        examples: src.chain(tgt).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_two_domain, SynthConfig};

    fn pair() -> (Dataset, Dataset) {
        let cfg = SynthConfig {
            samples_per_class: 3,
            extent: 16,
            ..SynthConfig::default()
        };
        let (a, mut b) = synth_two_domain(&cfg).unwrap();
        b.examples.truncate(4);
        (a, b)
    }

    #[test]
    fn tags_follow_argument_order() {
        let (a, b) = pair();
        let s = assign_domain_labels(&a, &b);
        assert_eq!(s.of(DomainLabel::Source).count(), 6);
        assert_eq!(s.of(DomainLabel::Target).count(), 4);
        assert!(s.of(DomainLabel::Source).all(|e| e.domain.value() == 0));
        assert!(s.of(DomainLabel::Target).all(|e| e.domain.value() == 1));

        let swapped = assign_domain_labels(&b, &a);
        assert_eq!(swapped.of(DomainLabel::Source).count(), 4);
        assert_eq!(swapped.of(DomainLabel::Target).count(), 6);
    }

    #[test]
    fn target_view_has_no_class_labels() {
        let (a, b) = pair();
        let s = assign_domain_labels(&a, &b);
        assert!(s.of(DomainLabel::Target).all(|e| e.label.is_none()));
        assert!(s.of(DomainLabel::Source).all(|e| e.label.is_some()));
    }
}
