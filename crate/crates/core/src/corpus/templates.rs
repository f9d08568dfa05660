//! Standard questions and the paraphrase templates the generator draws
//! assessor and claimant turns from.
//!
//! Slot syntax: `{Hos}` introduces a fresh entity of that type, `{=Hos}`
//! repeats the entity of that type mentioned in the preceding question.
//! Assessor turns carry no punctuation, as speech-recognition output would.

/// A question with the claimant answers it admits.
#[derive(Debug)]
pub struct QuestionTemplate {
    pub question: &'static str,
    pub positive: &'static [&'static str],
    pub negative: &'static [&'static str],
}

#[derive(Debug)]
pub struct TopicTemplates {
    pub topic_id: &'static str,
    pub standard_questions: &'static [&'static str],
    /// Open questions close to a standard question; they start the topic.
    pub openers: &'static [QuestionTemplate],
    /// Questions naming entities, answered by confirmation or negation.
    pub entity_questions: &'static [QuestionTemplate],
    /// Follow-up questions whose answers carry the entities.
    pub follow_ups: &'static [QuestionTemplate],
    /// Assessor statements recording entities directly.
    pub statements: &'static [&'static str],
}

pub const ACKS: &[&str] = &[
    "okay",
    "alright thank you",
    "got it thank you",
    "okay let me note that down",
    "i see",
    "understood",
];

pub const CLAIMANT_ACKS: &[&str] = &["Okay.", "Sure.", "Alright.", "Fine.", "Yes, okay."];

pub const PREAMBLE: &[(&str, &str)] = &[
    (
        "hello i am the assessor handling your claim today",
        "Hello.",
    ),
    ("can you hear me clearly", "Yes, I can hear you."),
];

pub const PREAMBLE_QUESTIONS: &[bool] = &[false, true];

pub const CLOSING: (&str, &str) = ("thank you that is all for today", "Thank you, goodbye.");

pub const TOPICS: &[TopicTemplates] = &[
    TopicTemplates {
        topic_id: "resident_info",
        standard_questions: &[
            "where do you live now",
            "what is your current home address",
            "how long have you lived at your current address",
            "when did you move into your current home",
        ],
        openers: &[
            QuestionTemplate {
                question: "so where do you live now",
                positive: &[
                    "I live on {Addr}.",
                    "I live near {Addr} now.",
                    "My home is on {Addr}.",
                ],
                negative: &["I do not have a fixed home right now."],
            },
            QuestionTemplate {
                question: "what is your current home address please",
                positive: &["It is {Addr}.", "{Addr}, since {Date}."],
                negative: &["No, I would rather not say."],
            },
        ],
        entity_questions: &[
            QuestionTemplate {
                question: "do you still live on {Addr}",
                positive: &["Yes, I do.", "Yes, since {Date}."],
                negative: &["No, I moved away.", "No, not anymore."],
            },
            QuestionTemplate {
                question: "did you move to {Addr} on {Date}",
                positive: &["Yes, that is right.", "Right."],
                negative: &["No, that is not right.", "No, I never lived on {=Addr}."],
            },
            QuestionTemplate {
                question: "have you lived there since {Date}",
                positive: &["Yes.", "Yes, that is correct."],
                negative: &["No, not since then."],
            },
        ],
        follow_ups: &[QuestionTemplate {
            question: "when did you move into this home",
            positive: &["I moved in on {Date}.", "On {Date}."],
            negative: &["I do not remember."],
        }],
        statements: &[
            "okay i will write down {Addr} as your home address",
            "alright i have noted {Date} as the move in date",
        ],
    },
    TopicTemplates {
        topic_id: "work_record",
        standard_questions: &[
            "where do you work now",
            "what is the address of your company",
            "when did you start working there",
        ],
        openers: &[
            QuestionTemplate {
                question: "so where do you work now",
                positive: &["I work at an office on {Addr}.", "My company is on {Addr}."],
                negative: &["I do not work at the moment."],
            },
            QuestionTemplate {
                question: "what is the address of your company please",
                positive: &["It is on {Addr}.", "{Addr}."],
                negative: &["No, I am not employed."],
            },
        ],
        entity_questions: &[
            QuestionTemplate {
                question: "is your company still on {Addr}",
                positive: &["Yes, it is.", "Yes, still there."],
                negative: &["No, it moved.", "No, not anymore."],
            },
            QuestionTemplate {
                question: "did you start working there on {Date}",
                positive: &["Yes, that is right."],
                negative: &["No, that is wrong."],
            },
        ],
        follow_ups: &[QuestionTemplate {
            question: "and when did you start working there",
            positive: &["I started on {Date}.", "On {Date}."],
            negative: &["I do not remember."],
        }],
        statements: &[
            "okay i will record {Addr} as your work address",
            "alright your start date is {Date}",
        ],
    },
    TopicTemplates {
        topic_id: "diagnostic_record",
        standard_questions: &[
            "which hospital diagnosed your illness",
            "when were you diagnosed",
            "what examinations did the doctor do for the diagnosis",
        ],
        openers: &[
            QuestionTemplate {
                question: "which hospital diagnosed your illness",
                positive: &["It was {Hos}.", "I was diagnosed at {Hos}."],
                negative: &["No hospital, I was not diagnosed."],
            },
            QuestionTemplate {
                question: "and when were you diagnosed",
                positive: &["On {Date}.", "I was diagnosed on {Date}."],
                negative: &["I do not remember the date."],
            },
        ],
        entity_questions: &[
            QuestionTemplate {
                question: "were you diagnosed at {Hos}",
                positive: &["Yes, I was.", "Yes, on {Date}."],
                negative: &["No, never.", "No, I was never at {=Hos}."],
            },
            QuestionTemplate {
                question: "did the doctor do a {Exam} for the diagnosis",
                positive: &["Yes, they did.", "Yes, and also a {Exam}."],
                negative: &["No, never.", "No, they did not."],
            },
            QuestionTemplate {
                question: "were you diagnosed on {Date}",
                positive: &["Yes, that is right."],
                negative: &["No, that is not right."],
            },
        ],
        follow_ups: &[QuestionTemplate {
            question: "what examinations did the doctor do",
            positive: &["They did a {Exam}.", "A {Exam} at {Hos}."],
            negative: &["No examinations were done."],
        }],
        statements: &[
            "okay i will note {Hos} as the diagnosing hospital",
            "alright the {Exam} result is recorded",
        ],
    },
    TopicTemplates {
        topic_id: "disease_history",
        standard_questions: &[
            "have you had any other diseases before",
            "did you receive treatment in any hospital before",
            "did you have any medical examination in the past",
        ],
        openers: &[
            QuestionTemplate {
                question: "have you had any other diseases before",
                positive: &["Yes, I had {Dis}.", "I had {Dis} on {Date}."],
                negative: &["No, never.", "No, I have not."],
            },
            QuestionTemplate {
                question: "did you receive treatment in any hospital before",
                positive: &["Yes, at {Hos}.", "Yes, I was treated at {Hos} on {Date}."],
                negative: &["No, I have not.", "No, never."],
            },
        ],
        entity_questions: &[
            QuestionTemplate {
                question: "have you ever had {Dis}",
                positive: &["Yes, I had it on {Date}.", "Yes, I have."],
                negative: &["No, never.", "No, I never had {=Dis}."],
            },
            QuestionTemplate {
                question: "were you treated for {Dis} at {Hos}",
                positive: &["Yes, I was.", "Yes, that is right."],
                negative: &["No, I was not.", "No, I never went to {=Hos}."],
            },
            QuestionTemplate {
                question: "did you have a {Exam} in the past",
                positive: &["Yes, I did.", "Yes, on {Date}."],
                negative: &["No, never."],
            },
        ],
        follow_ups: &[QuestionTemplate {
            question: "which diseases were you treated for",
            positive: &["I was treated for {Dis}.", "{Dis} and {Dis}."],
            negative: &["No other diseases."],
        }],
        statements: &[
            "okay i will record {Dis} in your disease history",
            "alright {Hos} is noted for your past treatment",
        ],
    },
    TopicTemplates {
        topic_id: "medical_insurance",
        standard_questions: &[
            "do you have social medical insurance",
            "where is your medical insurance registered",
            "when did you join the medical insurance",
        ],
        openers: &[
            QuestionTemplate {
                question: "do you have social medical insurance",
                positive: &["Yes, I have it in {Addr}.", "Yes, I joined on {Date}."],
                negative: &["No, I do not have it."],
            },
            QuestionTemplate {
                question: "where is your medical insurance registered",
                positive: &["It is registered on {Addr}.", "On {Addr}."],
                negative: &["No, it is not registered."],
            },
        ],
        entity_questions: &[
            QuestionTemplate {
                question: "is your insurance registered on {Addr}",
                positive: &["Yes, it is."],
                negative: &["No, it is not."],
            },
            QuestionTemplate {
                question: "did you join the medical insurance on {Date}",
                positive: &["Yes, that is right."],
                negative: &["No, that is not right."],
            },
        ],
        follow_ups: &[QuestionTemplate {
            question: "when did you join the medical insurance",
            positive: &["I joined on {Date}."],
            negative: &["I do not remember."],
        }],
        statements: &["okay i will note that your insurance is registered on {Addr}"],
    },
    TopicTemplates {
        topic_id: "commercial_insurance",
        standard_questions: &[
            "have you bought any commercial insurance",
            "when did you buy the commercial insurance",
        ],
        openers: &[
            QuestionTemplate {
                question: "have you bought any commercial insurance",
                positive: &["Yes, I bought one on {Date}.", "Yes, on {Date}."],
                negative: &["No, I have not bought any.", "No, never."],
            },
            QuestionTemplate {
                question: "when did you buy the commercial insurance",
                positive: &["I bought it on {Date}.", "On {Date}."],
                negative: &["I do not remember."],
            },
        ],
        entity_questions: &[QuestionTemplate {
            question: "did you buy it on {Date}",
            positive: &["Yes, that is right."],
            negative: &["No, that is not right."],
        }],
        follow_ups: &[],
        statements: &["okay the purchase date {Date} is recorded"],
    },
];

/// `(topic_id, question)` pairs of the default standard-question set.
pub fn standard_questions() -> Vec<(String, String)> {
    TOPICS
        .iter()
        .flat_map(|t| {
            t.standard_questions
                .iter()
                .map(move |q| (t.topic_id.to_string(), q.to_string()))
        })
        .collect()
}

pub fn topic(topic_id: &str) -> Option<&'static TopicTemplates> {
    TOPICS.iter().find(|t| t.topic_id == topic_id)
}
