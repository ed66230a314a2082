//! English cardinal words for delay annotations, e.g. 200 -> "two hundred".

const UNITS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

fn below_thousand(n: u64, out: &mut Vec<String>) {
    debug_assert!(n < 1000);
    let mut n = n;
    if n >= 100 {
        out.push(UNITS[(n / 100) as usize].to_string());
        out.push("hundred".to_string());
        n %= 100;
    }
    if n >= 20 {
        let tens = TENS[(n / 10) as usize];
        let unit = n % 10;
        if unit > 0 {
            out.push(format!("{tens}-{}", UNITS[unit as usize]));
        } else {
            out.push(tens.to_string());
        }
    } else if n > 0 {
        out.push(UNITS[n as usize].to_string());
    }
}

/// Cardinal words for a non-negative integer.
pub fn cardinal(n: u64) -> String {
    if n == 0 {
        return "zero".to_string();
    }
    let mut parts = Vec::new();
    let millions = n / 1_000_000;
    let thousands = (n / 1_000) % 1_000;
    let rest = n % 1_000;
    if millions > 0 {
        below_thousand(millions, &mut parts);
        parts.push("million".to_string());
    }
    if thousands > 0 {
        below_thousand(thousands, &mut parts);
        parts.push("thousand".to_string());
    }
    below_thousand(rest, &mut parts);
    parts.join(" ")
}

/// Rounds a millisecond delay to the nearest 100 and spells it out; `None`
/// when the value rounds to zero (the annotation is omitted).
pub fn delay_to_words(ms: i64) -> Option<String> {
    if ms < 0 {
        return None;
    }
    let rounded = ((ms + 50) / 100) * 100;
    if rounded == 0 {
        None
    } else {
        Some(cardinal(rounded as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spells_paper_example() {
        assert_eq!(delay_to_words(200).as_deref(), Some("two hundred"));
    }

    #[test]
    fn rounds_to_nearest_hundred() {
        assert_eq!(
            delay_to_words(1480).as_deref(),
            Some("one thousand five hundred")
        );
        assert_eq!(delay_to_words(20), None);
        assert_eq!(delay_to_words(0), None);
        assert_eq!(delay_to_words(50).as_deref(), Some("one hundred"));
    }

    #[test]
    fn cardinal_covers_compounds() {
        assert_eq!(cardinal(0), "zero");
        assert_eq!(cardinal(17), "seventeen");
        assert_eq!(cardinal(42), "forty-two");
        assert_eq!(cardinal(900), "nine hundred");
        assert_eq!(cardinal(2_340), "two thousand three hundred forty");
        assert_eq!(cardinal(1_000_000), "one million");
        assert_eq!(
            cardinal(1_234_567),
            "one million two hundred thirty-four thousand five hundred sixty-seven"
        );
    }
}
