//! Risk/uncertainty word list used to gate the sentiment score.

/// Lowercase risk and uncertainty words, inflections included.
pub const RISK_WORDS: &[&str] = &[
    "risk",
    "jeopardize",
    "riskiness",
    "risks",
    "unsettled",
    "treacherous",
    "uncertainty",
    "unpredictability",
    "oscillating",
    "variable",
    "dilemma",
    "perilous",
    "chance",
    "skepticism",
    "tentativeness",
    "possibility",
    "hesitancy",
    "unreliability",
    "pending",
    "riskier",
    "wariness",
    "uncertainties",
    "unresolved",
    "vagueness",
    "uncertain",
    "unsure",
    "dodgy",
    "doubt",
    "irregular",
    "equivocation",
    "prospect",
    "jeopardy",
    "indecisive",
    "bet",
    "suspicion",
    "chancy",
    "variability",
    "risking",
    "menace",
    "exposed",
    "peril",
    "qualm",
    "likelihood",
    "hesitating",
    "vacillating",
    "threat",
    "risked",
    "gnarly",
    "probability",
    "unreliable",
    "disquiet",
    "unknown",
    "unsafe",
    "ambivalence",
    "varying",
    "hazy",
    "imperil",
    "unclear",
    "apprehension",
    "vacillation",
    "unpredictable",
    "unforeseeable",
    "incalculable",
    "speculative",
    "halting",
    "untrustworthy",
    "fear",
    "wager",
    "equivocating",
    "reservation",
    "torn",
    "diffident",
    "hesitant",
    "precarious",
    "fickleness",
    "gamble",
    "undetermined",
    "misgiving",
    "risky",
    "insecurity",
    "changeability",
    "instability",
    "debatable",
    "undependable",
    "doubtful",
    "undecided",
    "incertitude",
    "hazard",
    "dicey",
    "fitful",
    "tricky",
    "indecision",
    "parlous",
    "sticky",
    "wavering",
    "unconfident",
    "dangerous",
    "iffy",
    "defenseless",
    "tentative",
    "faltering",
    "unsureness",
    "hazardous",
    "endanger",
    "fluctuant",
    "queries",
    "quandary",
    "niggle",
    "danger",
    "insecure",
    "diffidence",
    "fluctuating",
    "changeable",
    "precariousness",
    "unstable",
    "riskiest",
    "doubtfulness",
    "vague",
    "hairy",
    "erratic",
    "ambivalent",
    "query",
    "dubious",
];
