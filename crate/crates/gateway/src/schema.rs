use absa_core::prompt::ANSWER_KEY;
use absa_core::DomainTaxonomy;
use serde_json::{json, Map, Value};

pub const SCHEMA_NAME: &str = "AspectBasedSentimentAnalysis";

const TARGET_DESC: &str = "A specific word or short extract, taken without modification, from the context sentence which someone is expressing an opinion about. For example in the sentence 'I love my new iPhone, it is so great ', the target is iPhone. Use the specific word NULL if there is no explicit target, for example in the sentence 'Pretty good', there is no explicit target.";
const CATEGORY_DESC: &str = "The best description of the category that the target belongs to. For example, if the person is talking about the price of a service, the aspect_category is: price";
const SENTIMENT_DESC: &str = "The best description of the sentiment that the opinion towards the target belongs to. For example, if the person is satisfied with the service, the sentiment is: positive";
const EXPRESSION_DESC: &str = "A short extract, taken without modification, from the context sentence which explains or justifies the overall classification of the sentiment and aspect_category";
const LIST_DESC: &str = "A structured list of individual topics or subjects in a sentence, which are then used for targeted sentiment analysis";

/// JSON Schema for the answer object of `taxonomy`'s domain.
pub fn emit_json_schema(taxonomy: &DomainTaxonomy) -> Value {
    let labels: Vec<&str> = taxonomy.labels().collect();
    let sentiments: Vec<&str> = taxonomy.sentiments.iter().map(|s| s.as_str()).collect();

    let mut properties = Map::new();
    properties.insert("target".into(), json!({"type": "string", "description": TARGET_DESC}));
    properties.insert(
        "aspect_category".into(),
        json!({"type": "string", "enum": labels, "description": CATEGORY_DESC}),
    );
    properties.insert(
        "sentiment".into(),
        json!({"type": "string", "enum": sentiments, "description": SENTIMENT_DESC}),
    );
    let mut required = vec!["target", "aspect_category", "sentiment"];
    if taxonomy.task_arity.has_opinion_expression() {
        properties.insert(
            "opinion_expression".into(),
            json!({"type": "string", "description": EXPRESSION_DESC}),
        );
        required.push("opinion_expression");
    }

    json!({
        "type": "object",
        "properties": {
            ANSWER_KEY: {
                "type": "array",
                "description": LIST_DESC,
                "items": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                    "additionalProperties": false,
                },
            },
        },
        "required": [ANSWER_KEY],
        "additionalProperties": false,
    })
}
