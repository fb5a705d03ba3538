use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LayoutError;

/// Rico's semantic component vocabulary. Index in this table is the category id.
const NAMES: [&str; ComponentCategory::COUNT] = [
    "text",
    "text button",
    "icon",
    "image",
    "toolbar",
    "list item",
    "input",
    "background image",
    "card",
    "web view",
    "radio button",
    "drawer",
    "checkbox",
    "advertisement",
    "modal",
    "pager indicator",
    "slider",
    "on/off switch",
    "button bar",
    "number stepper",
    "multi-tab",
    "date picker",
    "map view",
    "video",
    "bottom navigation",
];

/// One of the 25 UI component kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentCategory(u8);

impl ComponentCategory {
    pub const COUNT: usize = 25;

    pub const TEXT: Self = Self(0);
    pub const TEXT_BUTTON: Self = Self(1);
    pub const ICON: Self = Self(2);
    pub const IMAGE: Self = Self(3);
    pub const TOOLBAR: Self = Self(4);
    pub const LIST_ITEM: Self = Self(5);
    pub const INPUT: Self = Self(6);
    pub const BACKGROUND_IMAGE: Self = Self(7);
    pub const CARD: Self = Self(8);
    pub const WEB_VIEW: Self = Self(9);
    pub const RADIO_BUTTON: Self = Self(10);
    pub const DRAWER: Self = Self(11);
    pub const CHECKBOX: Self = Self(12);
    pub const ADVERTISEMENT: Self = Self(13);
    pub const MODAL: Self = Self(14);
    pub const PAGER_INDICATOR: Self = Self(15);
    pub const SLIDER: Self = Self(16);
    pub const ON_OFF_SWITCH: Self = Self(17);
    pub const BUTTON_BAR: Self = Self(18);
    pub const NUMBER_STEPPER: Self = Self(19);
    pub const MULTI_TAB: Self = Self(20);
    pub const DATE_PICKER: Self = Self(21);
    pub const MAP_VIEW: Self = Self(22);
    pub const VIDEO: Self = Self(23);
    pub const BOTTOM_NAVIGATION: Self = Self(24);

    pub fn from_id(id: usize) -> Option<Self> {
        (id < Self::COUNT).then_some(Self(id as u8))
    }

    /// Case-insensitive lookup that also accepts Rico's `componentLabel`
    /// spelling ("Text Button", "On/Off Switch", "Multi_Tab").
    pub fn from_name(name: &str) -> Option<Self> {
        let normalize = |s: &str| -> String {
            s.trim()
                .chars()
                .map(|c| match c {
                    '_' | '-' => ' ',
                    c => c.to_ascii_lowercase(),
                })
                .collect()
        };
        let wanted = normalize(name);
        NAMES
            .iter()
            .position(|n| normalize(n) == wanted)
            .map(|i| Self(i as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        NAMES[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..Self::COUNT as u8).map(Self)
    }
}

impl fmt::Display for ComponentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComponentCategory {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| LayoutError::UnknownCategory(s.to_string()))
    }
}

impl Serialize for ComponentCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ComponentCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ids_are_a_bijection() {
        let ids: HashSet<usize> = ComponentCategory::all().map(|c| c.id()).collect();
        assert_eq!(ids.len(), 25);
        assert!(ids.iter().all(|&i| i < 25));
    }

    #[test]
    fn names_round_trip_and_are_unique_lowercase() {
        let mut seen = HashSet::new();
        for c in ComponentCategory::all() {
            assert_eq!(c.name(), c.name().to_lowercase());
            assert!(seen.insert(c.name()));
            assert_eq!(ComponentCategory::from_name(c.name()), Some(c));
            assert_eq!(ComponentCategory::from_id(c.id()), Some(c));
        }
        assert_eq!(ComponentCategory::from_id(25), None);
    }

    #[test]
    fn accepts_rico_labels() {
        assert_eq!(
            ComponentCategory::from_name("Text Button"),
            Some(ComponentCategory::TEXT_BUTTON)
        );
        assert_eq!(
            ComponentCategory::from_name("On/Off Switch"),
            Some(ComponentCategory::ON_OFF_SWITCH)
        );
        assert_eq!(
            ComponentCategory::from_name("Multi_Tab"),
            Some(ComponentCategory::MULTI_TAB)
        );
        assert_eq!(ComponentCategory::from_name("Spinner"), None);
    }
}
