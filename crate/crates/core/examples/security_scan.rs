//! Scans snippets with the bundled pattern rules.

use codeeval::analyzers::{format_line_report, RuleSet};

pub fn main() {
    let rules = RuleSet::builtin();
    println!("{} bundled rules", rules.len());
    let samples = [
        ("shell", "import os\ndef run(name):\n    os.system('ls ' + name)\n"),
        (
            "query",
            "def find(cur, user):\n    cur.execute(f\"SELECT * FROM t WHERE u = '{user}'\")\n",
        ),
        ("clean", "import subprocess\nsubprocess.run(['ls', path], check=True)\n"),
    ];
    for (name, source) in samples {
        let findings = rules.scan(source);
        println!("== {name}: {} finding(s)", findings.len());
        for f in &findings {
            println!("  {} {:?}", f.rule_id, f.cwe());
        }
        print!("{}", format_line_report(&findings));
    }
}
