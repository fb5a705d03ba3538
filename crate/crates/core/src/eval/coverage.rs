use serde::{Deserialize, Serialize};

use crate::layout::{ComponentCondition, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub recall: f64,
    pub missing: ComponentCondition,
    pub extra: ComponentCondition,
}

/// Multiset recall of the requested components in a produced layout. An
/// empty request is trivially covered.
pub fn component_coverage(requested: &ComponentCondition, produced: &Layout) -> Coverage {
    let got = produced.condition();
    let hit = requested.intersect(&got).total();
    Coverage {
        recall: if requested.is_empty() {
            1.0
        } else {
            hit as f64 / requested.total() as f64
        },
        missing: requested.difference(&got),
        extra: got.difference(requested),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BBox, ComponentCategory as C};

    fn layout(items: &[C]) -> Layout {
        Layout::with_elements(
            288,
            512,
            items.iter().map(|&c| (c, BBox::new(0.1, 0.1, 0.2, 0.2))),
        )
    }

    #[test]
    fn present_component_is_recalled() {
        let cov = component_coverage(&ComponentCondition::new().with(C::TOOLBAR, 1), &layout(&[C::TEXT, C::TOOLBAR]));
        assert_eq!(cov.recall, 1.0);
        assert!(cov.missing.is_empty());
        assert_eq!(cov.extra, ComponentCondition::new().with(C::TEXT, 1));
    }

    #[test]
    fn dropped_advertisement() {
        let cov = component_coverage(
            &ComponentCondition::new().with(C::ADVERTISEMENT, 1),
            &layout(&[C::TOOLBAR]),
        );
        assert_eq!(cov.recall, 0.0);
        assert_eq!(cov.missing, ComponentCondition::new().with(C::ADVERTISEMENT, 1));
    }

    #[test]
    fn multiset_half() {
        let cov = component_coverage(
            &ComponentCondition::new().with(C::TEXT_BUTTON, 2),
            &layout(&[C::TEXT_BUTTON]),
        );
        assert_eq!(cov.recall, 0.5);
        assert_eq!(cov.missing.count(C::TEXT_BUTTON), 1);
    }
}
