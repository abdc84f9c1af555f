//! Renders the same conversation with every built-in chat template, plus an
//! infilling prompt.

use codeeval::templating::{Message, TemplateRegistry};

pub fn main() {
    let registry = TemplateRegistry::with_builtins();
    let messages = [
        Message::system("You are a coding assistant."),
        Message::user("Write a function that returns the square of a number."),
    ];
    for id in registry.ids() {
        let template = registry.get(id).unwrap();
        println!("== {id}");
        println!("{}", template.render(&messages).unwrap());
    }

    let deepseek = registry.get("deepseek").unwrap();
    let infill = deepseek
        .render_infill("def square(x):\n    ", "\n\nprint(square(3))\n")
        .unwrap();
    println!("== deepseek infilling\n{infill}");

    // custom templates are JSON documents
    let mut registry = registry;
    let custom = r#"{
        "id": "chatml",
        "system_prefix": "<|im_start|>system\n", "system_suffix": "<|im_end|>\n",
        "user_prefix": "<|im_start|>user\n", "user_suffix": "<|im_end|>\n",
        "assistant_prefix": "<|im_start|>assistant\n", "assistant_suffix": "<|im_end|>\n"
    }"#;
    registry.register_document(custom).unwrap();
    println!(
        "== chatml\n{}",
        registry.get("chatml").unwrap().render(&messages).unwrap()
    );
}
