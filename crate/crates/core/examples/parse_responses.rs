//! Parses a handful of agent responses and shows the canonical rendering.

use alden::grammar::parse_response;

fn main() {
    let responses = [
        "<think>the date is asked for</think><search>date</search>",
        "  <think>question names page 4</think><fetch> 4 </fetch>\n",
        "<think>found it</think><answer>\\boxed{cobalt}</answer>",
        "<think>t</think><fetch>twelve</fetch>",
        "<search>no think block</search>",
        "<think>a</think><search>x</search><fetch>2</fetch>",
    ];
    for text in responses {
        let parsed = parse_response(text);
        match parsed.action() {
            Some(action) => println!("{text:?}\n  -> {} {:?}\n  canonical {:?}", action.kind(), action.command, action.render()),
            None => println!("{text:?}\n  -> {parsed:?}"),
        }
    }
}
