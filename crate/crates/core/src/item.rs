//! Colors and analysis marks attached to packed items.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Blue,
    Red,
    ProvisionalBlue,
    ProvisionalRed,
    /// Bonus items carry no color.
    None,
}

impl Color {
    pub fn is_provisional(self) -> bool {
        matches!(self, Color::ProvisionalBlue | Color::ProvisionalRed)
    }

    /// Blue or provisionally blue.
    pub fn is_blueish(self) -> bool {
        matches!(self, Color::Blue | Color::ProvisionalBlue)
    }

    pub fn is_redish(self) -> bool {
        matches!(self, Color::Red | Color::ProvisionalRed)
    }

    pub fn token(self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Red => "red",
            Color::ProvisionalBlue => "pblue",
            Color::ProvisionalRed => "pred",
            Color::None => "none",
        }
    }

    pub fn parse(text: &str) -> Option<Color> {
        Some(match text {
            "blue" => Color::Blue,
            "red" => Color::Red,
            "pblue" => Color::ProvisionalBlue,
            "pred" => Color::ProvisionalRed,
            "none" => Color::None,
            _ => return None,
        })
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Mark of a medium item: unmixed (N), mixed with small reds (B), mixed with a large item (R).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mark {
    Unmarked,
    N,
    B,
    R,
}

impl Mark {
    pub fn token(self) -> &'static str {
        match self {
            Mark::Unmarked => "-",
            Mark::N => "N",
            Mark::B => "B",
            Mark::R => "R",
        }
    }

    pub fn parse(text: &str) -> Option<Mark> {
        Some(match text {
            "-" => Mark::Unmarked,
            "N" => Mark::N,
            "B" => Mark::B,
            "R" => Mark::R,
            _ => return None,
        })
    }

    pub const MARKED: [Mark; 3] = [Mark::N, Mark::B, Mark::R];

    pub fn slot(self) -> usize {
        match self {
            Mark::N => 0,
            Mark::B => 1,
            Mark::R => 2,
            Mark::Unmarked => panic!("unmarked items have no counter slot"),
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}
