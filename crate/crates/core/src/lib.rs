//! Engine and harness for next-edit-suggestion pipelines: trigger
//! detection, six-channel context assembly, prompt construction, diff-based
//! response parsing, and a deterministic 12-vector security evaluation with
//! report aggregation.

pub mod assemble;
pub mod corpus;
pub mod detect;
pub mod diff;
pub mod doc;
pub mod miner;
pub mod predict;
pub mod report;
pub mod risk;
pub mod runner;
pub mod session;
pub mod suggestion;
pub mod syntax;

pub use assemble::{
    assemble_prompt, extract_structural_context, AssembledPrompt, PromptBudgets, PromptInputs,
    SectionKind, StructuralContext,
};
pub use corpus::{load_corpus, DetectionSpec, Injection, TestCase};
pub use detect::{
    judge_detect, regex_detect, secret_detect, xml_config_check, DetectorKind, JudgeClient,
    KeywordJudge, MapJudge, PatternRule, Polarity, RulePack, Verdict, XmlParserKind,
    XmlProfileTable,
};
pub use doc::{Document, Position, Range, Span};
pub use predict::{
    EchoPredictor, EndpointPredictor, PredictContext, PredictError, Prediction, Predictor,
    PredictorConfig, ReplayPredictor,
};
pub use report::{aggregate, compare, render_csv, render_text, LogBase, Report, VectorStats};
pub use risk::{Category, Channel, VectorId};
pub use runner::{run_corpus, RunResult, RunVerdict, Runner, RunnerConfig, StepTrace};
pub use session::{
    ActionKind, EditHistory, EditOrigin, EditRecord, Session, SessionConfig, TriggerEvent,
    UserAction, ViewedSnippet,
};
pub use suggestion::{
    apply_suggestion, classify, diff_region, extract_region, ParsedSuggestion, TextEdit, Viewport,
};
pub use syntax::{
    build_outline, enclosing_chain, index_documents, parse, DiagnosticRecord, NodeKind,
    OutlineEntry, Severity, SymbolIndex, SyntaxNode,
};
