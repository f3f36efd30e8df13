//! Financial-ratio expressions over standard account codes.
//!
//! Ratios are data, not code: each definition is a name plus an arithmetic
//! expression parsed from text. The grammar is standard-precedence `+ - * /`
//! (the typographic `×`, `÷` and `−` are accepted too) over parentheses,
//! numeric literals, and account references. An account reference is an
//! integer with exactly five digits and must exist in the standard chart; it
//! evaluates to the subtree-rolled-up balance. A reference may carry a lag
//! suffix, `31100@-12`, reading the balance that many months earlier —
//! undefined when the history does not reach back that far.
//!
//! Division by zero yields "undefined" (`None`), not an error: downstream the
//! image codec renders undefined at the zero baseline.

use serde::{Deserialize, Serialize};

use crate::chart::StandardChart;
use crate::error::{Error, Result};
use crate::ledger::MonthlyBalance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    /// Rolled-up balance of a standard account in the current month.
    Account(u32),
    /// Rolled-up balance `lag` months before the current month.
    Lagged { code: u32, lag: u32 },
    Negate(Box<Expr>),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

/// A named ratio: the source text and its parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioDefinition {
    pub name: String,
    pub source: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RatioFile {
    name: String,
    expression: String,
}

impl RatioDefinition {
    pub fn parse(name: &str, expression: &str, chart: &StandardChart) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            source: expression.to_string(),
            expr: parse_expression(expression, chart)?,
        })
    }

    /// Evaluate at month `index` of a company's balance history.
    pub fn evaluate_at(
        &self,
        history: &[MonthlyBalance],
        index: usize,
        chart: &StandardChart,
    ) -> Option<f64> {
        eval(&self.expr, history, index, chart)
    }

    /// Evaluate against a single balance; lagged references are undefined.
    pub fn evaluate(&self, balance: &MonthlyBalance, chart: &StandardChart) -> Option<f64> {
        eval(&self.expr, std::slice::from_ref(balance), 0, chart)
    }
}

/// Parse `{name, expression}` JSON definitions against the chart.
pub fn load_ratio_definitions(json: &str, chart: &StandardChart) -> Result<Vec<RatioDefinition>> {
    let raw: Vec<RatioFile> = serde_json::from_str(json)?;
    raw.iter()
        .map(|r| RatioDefinition::parse(&r.name, &r.expression, chart))
        .collect()
}

/// The 21 ratio definitions shipped with the crate, in vector order.
pub fn builtin_ratios() -> Vec<RatioDefinition> {
    load_ratio_definitions(
        include_str!("../../data/ratio_definitions.json"),
        StandardChart::builtin(),
    )
    .expect("builtin ratio definitions are valid")
}

fn eval(expr: &Expr, history: &[MonthlyBalance], index: usize, chart: &StandardChart) -> Option<f64> {
    let value = match expr {
        Expr::Literal(v) => *v,
        Expr::Account(code) => history[index].rollup(*code, chart),
        Expr::Lagged { code, lag } => {
            let back = index.checked_sub(*lag as usize)?;
            history[back].rollup(*code, chart)
        }
        Expr::Negate(inner) => -eval(inner, history, index, chart)?,
        Expr::Binary { op, lhs, rhs } => {
            let l = eval(lhs, history, index, chart)?;
            let r = eval(rhs, history, index, chart)?;
            match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => {
                    if r == 0.0 {
                        return None;
                    }
                    l / r
                }
            }
        }
    };
    value.is_finite().then_some(value)
}

// ------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Code(u32),
    LaggedCode(u32, u32),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

/// Token plus its 1-based starting column.
struct Spanned {
    token: Token,
    column: usize,
}

fn syntax(column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let column = i + 1;
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push(Spanned { token: Token::Plus, column });
                i += 1;
            }
            '-' | '−' => {
                tokens.push(Spanned { token: Token::Minus, column });
                i += 1;
            }
            '*' | '×' => {
                tokens.push(Spanned { token: Token::Star, column });
                i += 1;
            }
            '/' | '÷' => {
                tokens.push(Spanned { token: Token::Slash, column });
                i += 1;
            }
            '(' => {
                tokens.push(Spanned { token: Token::LParen, column });
                i += 1;
            }
            ')' => {
                tokens.push(Spanned { token: Token::RParen, column });
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let literal: String = chars[start..i].iter().collect();
                let is_integer = !literal.contains('.');
                if is_integer && literal.len() == 5 {
                    let code: u32 = literal
                        .parse()
                        .map_err(|_| syntax(column, format!("bad account code {literal:?}")))?;
                    // Optional lag suffix: @-N
                    if i < chars.len() && chars[i] == '@' {
                        let at_col = i + 1;
                        i += 1;
                        if i >= chars.len() || chars[i] != '-' {
                            return Err(syntax(at_col + 1, "expected '-' after '@'"));
                        }
                        i += 1;
                        let lag_start = i;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                        if lag_start == i {
                            return Err(syntax(i + 1, "expected lag month count after '@-'"));
                        }
                        let lag: u32 = chars[lag_start..i]
                            .iter()
                            .collect::<String>()
                            .parse()
                            .map_err(|_| syntax(lag_start + 1, "lag out of range"))?;
                        tokens.push(Spanned { token: Token::LaggedCode(code, lag), column });
                    } else {
                        tokens.push(Spanned { token: Token::Code(code), column });
                    }
                } else {
                    let value: f64 = literal
                        .parse()
                        .map_err(|_| syntax(column, format!("bad numeric literal {literal:?}")))?;
                    tokens.push(Spanned { token: Token::Number(value), column });
                }
            }
            other => return Err(syntax(column, format!("unexpected character {other:?}"))),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    end_column: usize,
    chart: &'a StandardChart,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn column(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|s| s.column)
            .unwrap_or(self.end_column)
    }

    fn advance(&mut self) -> Option<&Spanned> {
        let s = self.tokens.get(self.pos);
        if s.is_some() {
            self.pos += 1;
        }
        s
    }

    fn expression(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = match self.peek() {
            Some(Token::Plus) => Some(BinaryOp::Add),
            Some(Token::Minus) => Some(BinaryOp::Sub),
            _ => None,
        } {
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op) = match self.peek() {
            Some(Token::Star) => Some(BinaryOp::Mul),
            Some(Token::Slash) => Some(BinaryOp::Div),
            _ => None,
        } {
            self.advance();
            let rhs = self.factor()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let column = self.column();
        match self.advance().map(|s| s.token.clone()) {
            Some(Token::Number(v)) => Ok(Expr::Literal(v)),
            Some(Token::Code(code)) => {
                if !self.chart.contains(code) {
                    return Err(Error::UnknownCode(code));
                }
                Ok(Expr::Account(code))
            }
            Some(Token::LaggedCode(code, lag)) => {
                if !self.chart.contains(code) {
                    return Err(Error::UnknownCode(code));
                }
                Ok(Expr::Lagged { code, lag })
            }
            Some(Token::Minus) => Ok(Expr::Negate(Box::new(self.factor()?))),
            Some(Token::LParen) => {
                let inner = self.expression()?;
                match self.advance().map(|s| s.token.clone()) {
                    Some(Token::RParen) => Ok(inner),
                    Some(_) => Err(syntax(self.tokens[self.pos - 1].column, "expected ')'")),
                    None => Err(syntax(self.end_column, "unbalanced parenthesis: expected ')'")),
                }
            }
            Some(other) => Err(syntax(column, format!("unexpected token {other:?}"))),
            None => Err(syntax(column, "expected a value")),
        }
    }
}

/// Parse an expression; code tokens are validated against the chart.
pub fn parse_expression(text: &str, chart: &StandardChart) -> Result<Expr> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(syntax(1, "empty expression"));
    }
    let end_column = text.chars().count() + 1;
    let mut parser = Parser { tokens, pos: 0, end_column, chart };
    let expr = parser.expression()?;
    if parser.pos != parser.tokens.len() {
        return Err(syntax(parser.column(), "trailing input after expression"));
    }
    Ok(expr)
}
