use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_AGE: u8 = 15;
pub const MAX_AGE: u8 = 60;

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }

            pub fn from_label(s: &str) -> Option<Self> {
                Self::ALL.iter().copied().find(|v| v.label() == s)
            }
        }
    };
}

labelled_enum!(Gender { Male => "M", Female => "F", Other => "O" });

labelled_enum!(Occupation {
    Physician => "physician",
    Teacher => "teacher",
    Businessperson => "businessperson",
    Actor => "actor",
    Engineer => "engineer",
    Student => "student",
    Sportsperson => "sportsperson",
    Writer => "writer",
    Banker => "banker",
});

labelled_enum!(
    /// Post categories, in the order used for every history and engagement
    /// column block.
    Category {
        Entertainment => "entertainment",
        Sports => "sports",
        Finance => "finance",
        Art => "art",
        Education => "education",
        Travel => "travel",
        Health => "health",
        Politics => "politics",
    }
);

pub const CATEGORY_COUNT: usize = 8;
pub const LOCATION_COUNT: usize = 8;

pub fn default_locations() -> Vec<String> {
    [
        "Dallas",
        "Chicago",
        "Houston",
        "New York",
        "Los Angeles",
        "Seattle",
        "Boston",
        "Atlanta",
    ]
    .iter()
    .map(|s| String::from(*s))
    .collect()
}

impl Occupation {
    /// Category an occupation posts about most.
    pub fn signature_category(self) -> Category {
        match self {
            Occupation::Physician => Category::Health,
            Occupation::Sportsperson => Category::Sports,
            Occupation::Teacher | Occupation::Student | Occupation::Engineer => Category::Education,
            Occupation::Banker | Occupation::Businessperson => Category::Finance,
            Occupation::Actor => Category::Entertainment,
            Occupation::Writer => Category::Art,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    pub age: u8,
    pub gender: Gender,
    pub occupation: Occupation,
    /// Index into the dataset's location list.
    pub location: u8,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_AGE..=MAX_AGE).contains(&self.age) {
            return Err(Error::param("age", alloc::format!("{} outside [{MIN_AGE}, {MAX_AGE}]", self.age)));
        }
        if usize::from(self.location) >= LOCATION_COUNT {
            return Err(Error::param("location", alloc::format!("index {} out of range", self.location)));
        }
        Ok(())
    }
}

/// Nonnegative weights over the eight post categories, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution([f64; CATEGORY_COUNT]);

impl CategoryDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(weights: [f64; CATEGORY_COUNT]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::param("weights", alloc::format!("sum to {total}, expected 1")));
        }
        Ok(CategoryDistribution(weights))
    }

    pub fn uniform() -> Self {
        CategoryDistribution([1.0 / CATEGORY_COUNT as f64; CATEGORY_COUNT])
    }

    /// Clamps negatives to zero and rescales to unit sum; an all-zero (or
    /// non-finite) input becomes uniform.
    pub fn normalized(raw: &[f64]) -> Self {
        let mut w = [0.0; CATEGORY_COUNT];
        for (dst, &v) in w.iter_mut().zip(raw) {
            *dst = if v.is_finite() { v.max(0.0) } else { 0.0 };
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Self::uniform();
        }
        for v in &mut w {
            *v /= total;
        }
        CategoryDistribution(w)
    }

    pub fn weights(&self) -> &[f64; CATEGORY_COUNT] {
        &self.0
    }

    pub fn weight(&self, c: Category) -> f64 {
        self.0[c.index()]
    }

    pub fn argmax(&self) -> Category {
        let mut best = 0;
        for i in 1..CATEGORY_COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Category::ALL[best]
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Reactions, shares, and comments, each spread over the eight categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementProfile {
    pub reactions: CategoryDistribution,
    pub shares: CategoryDistribution,
    pub comments: CategoryDistribution,
}

impl EngagementProfile {
    pub const KINDS: [&'static str; 3] = ["reactions", "shares", "comments"];

    pub fn parts(&self) -> [&CategoryDistribution; 3] {
        [&self.reactions, &self.shares, &self.comments]
    }

    /// The 24 weights laid out reactions, shares, comments.
    pub fn flat(&self) -> [f64; 3 * CATEGORY_COUNT] {
        let mut out = [0.0; 3 * CATEGORY_COUNT];
        for (k, part) in self.parts().iter().enumerate() {
            out[k * CATEGORY_COUNT..(k + 1) * CATEGORY_COUNT].copy_from_slice(part.weights());
        }
        out
    }
}
