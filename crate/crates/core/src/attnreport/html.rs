use std::fmt::Write as _;

use super::HighlightReport;

const GREEN: &str = "#b6f2b0";
const YELLOW: &str = "#fff3a0";
const BOTH: &str = "linear-gradient(#b6f2b0 50%, #fff3a0 50%)";

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Static HTML page with inline styles. The token stream sits inside
/// `<div id="tokens">`, one `<span>` per display unit.
pub fn render_html(report: &HighlightReport) -> String {
    let mut tokens = String::new();
    for t in &report.tokens {
        let mut style = String::from("white-space:pre-wrap;");
        match (t.green, t.yellow) {
            (true, true) => write!(style, "background:{BOTH};").unwrap(),
            (true, false) => write!(style, "background:{GREEN};").unwrap(),
            (false, true) => write!(style, "background:{YELLOW};").unwrap(),
            (false, false) => {}
        }
        if t.current {
            style.push_str("font-weight:bold;");
        }
        write!(
            tokens,
            r#"<span data-pos="{}" style="{style}">{}</span>"#,
            t.position,
            escape(&t.text)
        )
        .unwrap();
    }
    let verdict = if report.correct {
        "correct"
    } else {
        "incorrect"
    };
    let layers: Vec<&str> = report
        .cls_attends_speaker_by_layer
        .iter()
        .map(|&b| if b { "yes" } else { "no" })
        .collect();
    format!(
        r#"<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>{id} #{index}</title></head>
<body style="font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.8">
<h2 style="font-size:1.1em">{id} utterance {index}</h2>
<p>predicted <b>{pred}</b>, gold <b>{gold}</b> ({verdict})</p>
<p style="font-size:0.9em">
<span style="background:{GREEN}">green</span>: top {k} keys of the current speaker's name tokens, first layer.
<span style="background:{YELLOW}">yellow</span>: top {k} keys of the classification token, last layer.
Bold: current utterance. Name highlights cover the whole name.
Classification token reaches the speaker's name, per layer: {layers}.
</p>
<div id="tokens" style="font-family:monospace;border:1px solid #ccc;padding:1em">{tokens}</div>
</body>
</html>
"#,
        id = escape(&report.dialogue_id),
        index = report.index,
        pred = escape(&report.predicted),
        gold = escape(&report.gold),
        k = report.top_k,
        layers = layers.join(" "),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("<s>&'\""), "&lt;s&gt;&amp;&#39;&quot;");
    }
}
