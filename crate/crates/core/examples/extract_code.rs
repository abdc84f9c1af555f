//! Code extraction from typical model replies.

use codeeval::extraction::extract_code;

pub fn main() {
    let replies = [
        "Sure! Here is the fix:\n```python\ndef add(a, b):\n    return a + b\n```\nThis adds the numbers.",
        "```\nfirst()\n```\nand an alternative:\n```\nsecond()\n```",
        "def bare():\n    return 'no fences at all'",
        "```java\nclass Broken {\n// the fence never closes",
        "Windows line endings:\r\n```c\r\nint x = 1;\r\n```\r\n",
    ];
    for reply in replies {
        let r = extract_code(reply);
        println!("{:?} (block {:?}):\n{}\n", r.method, r.block_index, r.code);
    }
}
