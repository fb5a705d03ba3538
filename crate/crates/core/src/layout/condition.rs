use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ComponentCategory, LayoutError};

/// Multiset of component categories, e.g. `{text button: 2, toolbar: 1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentCondition {
    counts: BTreeMap<ComponentCategory, usize>,
}

impl ComponentCondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, category: ComponentCategory, n: usize) {
        if n > 0 {
            *self.counts.entry(category).or_default() += n;
        }
    }

    pub fn with(mut self, category: ComponentCategory, n: usize) -> Self {
        self.add(category, n);
        self
    }

    pub fn count(&self, category: ComponentCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ComponentCategory, usize)> + '_ {
        self.counts.iter().map(|(c, n)| (*c, *n))
    }

    /// One entry per requested element, sorted by category id.
    pub fn expanded(&self) -> Vec<ComponentCategory> {
        self.counts
            .iter()
            .flat_map(|(c, n)| std::iter::repeat_n(*c, *n))
            .collect()
    }

    /// Multiset intersection.
    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for (c, n) in self.iter() {
            out.add(c, n.min(other.count(c)));
        }
        out
    }

    /// Multiset difference `self − other` (saturating).
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for (c, n) in self.iter() {
            out.add(c, n.saturating_sub(other.count(c)));
        }
        out
    }
}

impl FromIterator<ComponentCategory> for ComponentCondition {
    fn from_iter<I: IntoIterator<Item = ComponentCategory>>(iter: I) -> Self {
        let mut out = Self::new();
        for c in iter {
            out.add(c, 1);
        }
        out
    }
}

/// Parses `"text button:2, toolbar:1, icon"`; a missing count means 1.
impl FromStr for ComponentCondition {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Self::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, n) = match part.rsplit_once(':') {
                Some((name, n)) => {
                    let n: usize = n
                        .trim()
                        .parse()
                        .map_err(|_| LayoutError::BadCondition(part.to_string()))?;
                    (name.trim(), n)
                }
                None => (part, 1),
            };
            out.add(name.parse()?, n);
        }
        Ok(out)
    }
}

impl fmt::Display for ComponentCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, n)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}:{n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let c: ComponentCondition = "text button:2, toolbar:1,icon".parse().unwrap();
        assert_eq!(c.count(ComponentCategory::TEXT_BUTTON), 2);
        assert_eq!(c.total(), 4);
        assert_eq!(c.to_string(), "text button:2,icon:1,toolbar:1");
        assert_eq!(c.to_string().parse::<ComponentCondition>().unwrap(), c);
    }

    #[test]
    fn expanded_is_sorted_by_id() {
        let c: ComponentCondition = "toolbar:1,text:2".parse().unwrap();
        assert_eq!(
            c.expanded(),
            vec![
                ComponentCategory::TEXT,
                ComponentCategory::TEXT,
                ComponentCategory::TOOLBAR
            ]
        );
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            "spinner:1".parse::<ComponentCondition>(),
            Err(LayoutError::UnknownCategory(_))
        ));
        assert!(matches!(
            "icon:x".parse::<ComponentCondition>(),
            Err(LayoutError::BadCondition(_))
        ));
        assert!("".parse::<ComponentCondition>().unwrap().is_empty());
    }

    #[test]
    fn serde_is_a_name_map() {
        let c: ComponentCondition = "input:2".parse().unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"input":2}"#);
    }
}
