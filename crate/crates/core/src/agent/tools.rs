//! Local executors behind the bundled tools. Everything here is offline and
//! deterministic: the calculator really evaluates, the rest answer from
//! fixed tables or echo their arguments.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::bundled;

pub type Args = Map<String, Value>;

pub const EXECUTORS: [&str; 8] = [
    "calculator",
    "query_stock",
    "wiki",
    "add_alarm",
    "add_reminder",
    "play_music",
    "book_hotel",
    "translate",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("no executor named `{0}`")]
    ExecutorNotFound(String),
    #[error("cannot parse expression: {0}")]
    CalculatorParse(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("missing argument `{0}`")]
    MissingArgument(&'static str),
}

/// Runs the executor named `executor_id` on `args`. Unknown argument
/// fields are ignored.
pub fn execute_tool(executor_id: &str, args: &Args) -> Result<String, ToolError> {
    match executor_id {
        "calculator" => {
            let expr = required(args, "expression")?;
            evaluate_expression(&expr).map(format_number)
        }
        "query_stock" => {
            let symbol = required(args, "symbol")?.trim().to_uppercase();
            Ok(match bundled::stock_price(&symbol) {
                Some(price) => format!("{symbol}: {price:.2}"),
                None => format!("unknown symbol {symbol}"),
            })
        }
        "wiki" => {
            let query = required(args, "query")?;
            Ok(match bundled::wiki_article(&query) {
                Some(text) => text.to_string(),
                None => format!("no article found for {}", query.trim()),
            })
        }
        "add_alarm" => Ok(format!("Alarm set for {}", required(args, "time")?)),
        "add_reminder" => {
            let content = required(args, "content")?;
            match optional(args, "time") {
                Some(time) => Ok(format!("Reminder saved: {content} at {time}")),
                None => Ok(format!("Reminder saved: {content}")),
            }
        }
        "play_music" => Ok(format!("Now playing {}", required(args, "song")?)),
        "book_hotel" => {
            let hotel = required(args, "hotel")?;
            let check_in = optional(args, "check_in").unwrap_or_else(|| "today".into());
            let check_out = optional(args, "check_out").unwrap_or_else(|| "tomorrow".into());
            Ok(format!("Booked {hotel} from {check_in} to {check_out}"))
        }
        "translate" => {
            let text = required(args, "text")?;
            let lang = optional(args, "target_language").unwrap_or_else(|| "en".into());
            Ok(format!("[{lang}] {text}"))
        }
        other => Err(ToolError::ExecutorNotFound(other.to_string())),
    }
}

/// Like [`execute_tool`] but folds failures into an `error: ...` string,
/// which is what the agent sees as the tool result.
pub fn execute_tool_lossy(executor_id: &str, args: &Args) -> String {
    execute_tool(executor_id, args).unwrap_or_else(|e| format!("error: {e}"))
}

fn optional(args: &Args, key: &str) -> Option<String> {
    match args.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

fn required(args: &Args, key: &'static str) -> Result<String, ToolError> {
    optional(args, key).ok_or(ToolError::MissingArgument(key))
}

/// Integral results print without a fractional part; others keep at most
/// ten decimals with trailing zeros trimmed.
pub fn format_number(x: f64) -> String {
    if x.is_finite() && x.abs() < 1e15 && (x - x.round()).abs() < 1e-9 {
        let r = x.round();
        // avoid "-0"
        return format!("{}", if r == 0.0 { 0.0 } else { r });
    }
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Evaluates `+ - * /` (also `×` and `÷`) with parentheses and unary signs
/// over decimal literals.
pub fn evaluate_expression(input: &str) -> Result<f64, ToolError> {
    let tokens = tokenize(input)?;
    if tokens.is_empty() {
        return Err(ToolError::CalculatorParse("empty expression".into()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let value = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(ToolError::CalculatorParse(format!(
            "unexpected token at position {}",
            p.pos
        )));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(f64),
    Op(char),
    Open,
    Close,
}

fn tokenize(input: &str) -> Result<Vec<Token>, ToolError> {
    let mut out = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                let n = lit
                    .parse::<f64>()
                    .map_err(|_| ToolError::CalculatorParse(format!("bad number `{lit}`")))?;
                out.push(Token::Num(n));
            }
            '+' | '-' | '*' | '/' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '×' | 'x' => {
                out.push(Token::Op('*'));
                i += 1;
            }
            '÷' => {
                out.push(Token::Op('/'));
                i += 1;
            }
            '−' => {
                out.push(Token::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            other => {
                return Err(ToolError::CalculatorParse(format!(
                    "unexpected character `{other}`"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, ToolError> {
        let mut acc = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { acc + rhs } else { acc - rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<f64, ToolError> {
        let mut acc = self.factor()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            if op == '*' {
                acc *= rhs;
            } else {
                if rhs == 0.0 {
                    return Err(ToolError::DivisionByZero);
                }
                acc /= rhs;
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<f64, ToolError> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.factor()
            }
            Some(Token::Num(n)) => {
                self.pos += 1;
                Ok(n)
            }
            Some(Token::Open) => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(Token::Close) {
                    return Err(ToolError::CalculatorParse("unbalanced parentheses".into()));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(t) => Err(ToolError::CalculatorParse(format!("unexpected {t:?}"))),
            None => Err(ToolError::CalculatorParse(
                "expression ended unexpectedly".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn args(v: Value) -> Args {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn calculator_examples() {
        let r = execute_tool("calculator", &args(json!({"expression": "(5+6)*3"})));
        assert_eq!(r.unwrap(), "33");
        assert_eq!(
            execute_tool("calculator", &args(json!({"expression": "2/0"}))),
            Err(ToolError::DivisionByZero)
        );
        assert_eq!(
            execute_tool_lossy("calculator", &args(json!({"expression": "2/0"}))),
            "error: division by zero"
        );
    }

    #[test]
    fn calculator_grammar() {
        let cases = [
            ("1+2*3", 7.0),
            ("(1+2)*3", 9.0),
            ("-4 + 10", 6.0),
            ("2 × 3 ÷ 4", 1.5),
            ("10 - 2 - 3", 5.0),
            ("8/2/2", 2.0),
            ("-(2+3)*-2", 10.0),
            ("0.1+0.2", 0.30000000000000004),
        ];
        for (expr, want) in cases {
            assert_eq!(evaluate_expression(expr).unwrap(), want, "{expr}");
        }
        for bad in ["", "1+", "(1+2", "1 2", "abc", "1..2"] {
            assert!(
                matches!(evaluate_expression(bad), Err(ToolError::CalculatorParse(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(33.0), "33");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(1.0 / 3.0), "0.3333333333");
    }

    #[test]
    fn canned_executors() {
        assert_eq!(
            execute_tool("query_stock", &args(json!({"symbol": "ACME"}))).unwrap(),
            "ACME: 100.00"
        );
        assert_eq!(
            execute_tool("query_stock", &args(json!({"symbol": "ZZZZ"}))).unwrap(),
            "unknown symbol ZZZZ"
        );
        assert_eq!(
            execute_tool(
                "add_alarm",
                &args(json!({"time": "07:00", "ignored": true}))
            )
            .unwrap(),
            "Alarm set for 07:00"
        );
        assert!(execute_tool("wiki", &args(json!({"query": "Alan Turing"})))
            .unwrap()
            .contains("mathematician"));
        assert_eq!(
            execute_tool("teleport", &Args::new()),
            Err(ToolError::ExecutorNotFound("teleport".into()))
        );
        assert_eq!(
            execute_tool("play_music", &Args::new()),
            Err(ToolError::MissingArgument("song"))
        );
    }

    #[test]
    fn every_listed_executor_exists() {
        for id in EXECUTORS {
            assert!(!matches!(
                execute_tool(id, &Args::new()),
                Err(ToolError::ExecutorNotFound(_))
            ));
        }
    }
}
