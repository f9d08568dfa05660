//! Closed date grammar shared by the generator, the gazetteer tagger and the
//! linker.
//!
//! Accepted surfaces:
//! - `YYYY-MM-DD` (month and day may use one digit)
//! - `YYYY/M/D`
//! - `last <weekday>`
//!
//! Numeric forms normalize to zero-padded `YYYY-MM-DD`; relative forms
//! normalize to `last <Weekday>`.

pub const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

/// Parses a single-token numeric date and returns its normalized form.
pub fn normalize_numeric(token: &str) -> Option<String> {
    let sep = if token.contains('-') {
        '-'
    } else if token.contains('/') {
        '/'
    } else {
        return None;
    };
    let mut parts = token.split(sep);
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let digits = |s: &str, min: usize, max: usize| {
        (min..=max).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit())
    };
    if !digits(y, 4, 4) || !digits(m, 1, 2) || !digits(d, 1, 2) {
        return None;
    }
    let (year, month, day): (u32, u32, u32) = (y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    Some(format!("{year:04}-{month:02}-{day:02}"))
}

pub fn weekday(token: &str) -> Option<&'static str> {
    WEEKDAYS
        .iter()
        .copied()
        .find(|w| w.eq_ignore_ascii_case(token))
}

/// Normalizes a whole date surface (one or two tokens). Returns `None` when
/// the surface is outside the grammar.
pub fn normalize_date(surface: &str) -> Option<String> {
    let words: Vec<&str> = surface.split_whitespace().collect();
    match words.as_slice() {
        [one] => normalize_numeric(one),
        [last, day] if last.eq_ignore_ascii_case("last") => {
            weekday(day).map(|w| format!("last {w}"))
        }
        _ => None,
    }
}
