//! Hand-labelled manager turns. `fmt` is the expected format bit and
//! `calls` the tool names a lenient parse must recover, in order.

pub struct FormatCase {
    pub label: &'static str,
    pub text: &'static str,
    pub fmt: u8,
    pub calls: &'static [&'static str],
}

const fn case(
    label: &'static str,
    text: &'static str,
    fmt: u8,
    calls: &'static [&'static str],
) -> FormatCase {
    FormatCase {
        label,
        text,
        fmt,
        calls,
    }
}

pub const CORPUS: &[FormatCase] = &[
    // Output template of the manager system prompt.
    case(
        "template/tool-calling",
        "<reasoning>\n\n### State Analysis\nWhat information is currently known? What information is missing? Have you finished the task?\n\n### Strategy Planning and Tool Selection\nWhat scheduling strategy will you use to solve the problem? List the tools and sub-tasks to be executed in this turn.\n\n</reasoning>\n<tool_call>\n{\"name\": \"tool_name_1\", \"arguments\": {}}\n</tool_call>\n<tool_call>\n{\"name\": \"tool_name_2\", \"arguments\": {}}\n</tool_call>",
        1,
        &["tool_name_1", "tool_name_2"],
    ),
    case(
        "template/final-answer",
        "<reasoning>\n\n### State Analysis\nWhat information is currently known? What information is missing? Have you finished the task?\n\n### Final Answer Submission\nYou have completed all necessary reasoning and tool calls. Now call the `final_answer` tool to finalize the task.\n\n</reasoning>\n<tool_call>\n{\"name\": \"final_answer\", \"arguments\": {}}\n</tool_call>",
        1,
        &["final_answer"],
    ),
    // Transcript excerpts. Arguments elided as `{...}` are not valid JSON.
    case(
        "transcript/1-round1-elided",
        "<reasoning>\nThe problem is to find the sum of elements of a set A... attempt to solve it by noting sum 2^{a-1} = 2024...\nStrategy Planning We will: 1. Use code_reasoner to compute the binary representation... 2. Use ensemble_solver...\n</reasoning>\n<tool_call> {\"name\": \"code_reasoner\", \"arguments\": {...}} </tool_call>\n<tool_call> {\"name\": \"ensemble_solver\", \"arguments\": {...}} </tool_call>",
        0,
        &[],
    ),
    case(
        "transcript/1-round1",
        "<reasoning>\nThe problem is to find the sum of elements of a set A... attempt to solve it by noting sum 2^{a-1} = 2024...\nStrategy Planning We will: 1. Use code_reasoner to compute the binary representation... 2. Use ensemble_solver...\n</reasoning>\n<tool_call> {\"name\": \"code_reasoner\", \"arguments\": {\"subtask\": \"Write 2024 in binary and sum (position + 1) over the set bits.\"}} </tool_call>\n<tool_call> {\"name\": \"ensemble_solver\", \"arguments\": {}} </tool_call>",
        1,
        &["code_reasoner", "ensemble_solver"],
    ),
    case(
        "transcript/1-round2-elided",
        "<reasoning>\nThe code_reasoner output says the sum is 55... But we must verify the binary representation and the logic using independent tools.\n</reasoning>\n<tool_call> {\"name\": \"code_reasoner\", \"arguments\": {...}} </tool_call>\n<tool_call> {\"name\": \"critical_reviewer\", \"arguments\": {...}} </tool_call>",
        0,
        &[],
    ),
    case(
        "transcript/1-round2",
        "<reasoning>\nThe code_reasoner output says the sum is 55... But we must verify the binary representation and the logic using independent tools.\n</reasoning>\n<tool_call> {\"name\": \"code_reasoner\", \"arguments\": {\"subtask\": \"Recompute the set bits of 2024 with bit shifts.\", \"model_id\": \"coder\"}} </tool_call>\n<tool_call> {\"name\": \"critical_reviewer\", \"arguments\": {\"subtask\": \"Check that A = {4,6,7,8,9,10,11} gives 2024 sets B.\"}} </tool_call>",
        1,
        &["code_reasoner", "critical_reviewer"],
    ),
    case(
        "transcript/1-final-elided",
        "<reasoning> All results converge to the same conclusion: the sum of the elements of A is 55. </reasoning>\n<tool_call> {\"name\": \"final_answer\", \"arguments\": {...}} </tool_call>",
        0,
        &[],
    ),
    case(
        "transcript/1-final",
        "<reasoning> All results converge to the same conclusion: the sum of the elements of A is 55. </reasoning>\n<tool_call> {\"name\": \"final_answer\", \"arguments\": {}} </tool_call>",
        1,
        &["final_answer"],
    ),
    case(
        "transcript/2-round1",
        "<reasoning>\n... deducing count is ... We will cross-verify using multiple independent methods...\n</reasoning>\n<tool_call> {\"name\": \"code_reasoner\", \"arguments\": {\"subtask\": \"Count digit placements in a 2x3 grid meeting the row and column sums.\"}} </tool_call>\n<tool_call> {\"name\": \"ensemble_solver\", \"arguments\": {}} </tool_call>",
        1,
        &["code_reasoner", "ensemble_solver"],
    ),
    case(
        "transcript/2-round2",
        "<reasoning>\n... The code_reasoner returned 21... but this contradicts the prior and current solution of 45.\nStrategy Planning 1. Use critical_reviewer to identify the flaw. 2. Use knowledge_searcher to confirm the stars-and-bars formula.\n</reasoning>\n<tool_call> {\"name\": \"critical_reviewer\", \"arguments\": {\"subtask\": \"Find the flaw in the code that returned 21.\"}} </tool_call>\n<tool_call> {\"name\": \"knowledge_searcher\", \"arguments\": {\"subtask\": \"number of non-negative integer solutions to a + b + c = 8\"}} </tool_call>",
        1,
        &["critical_reviewer", "knowledge_searcher"],
    ),
    case(
        "transcript/2-final-elided",
        "<reasoning> The analytical solution and ensemble reasoning both confirm 45... </reasoning>\n<tool_call> {\"name\": \"final_answer\", \"arguments\": {...}} </tool_call>",
        0,
        &[],
    ),
    case(
        "transcript/tool-reply-as-turn",
        "<reasoning> ... We'll use bin(2024)[2:]... code this. </reasoning>\n<code> # Step 1: Convert 2024 to binary... </code>\n<execution_result> 55 </execution_result>",
        0,
        &[],
    ),
    case(
        "transcript/final-answer-tool-output",
        "<reasoning> ... The correct number of valid arrangements is 45. </reasoning>\n<answer> \\boxed{45} </answer>",
        0,
        &[],
    ),
    // Well-formed variations.
    case(
        "ok/compact",
        "<reasoning>run it</reasoning><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"print(1)\"}}</tool_call>",
        1,
        &["python"],
    ),
    case(
        "ok/four-calls",
        "<reasoning>fan out</reasoning>\n<tool_call>{\"name\":\"standard_reasoner\",\"arguments\":{\"subtask\":\"a\"}}</tool_call>\n<tool_call>{\"name\":\"code_reasoner\",\"arguments\":{\"subtask\":\"a\"}}</tool_call>\n<tool_call>{\"name\":\"search\",\"arguments\":{\"query_list\":[\"a\"]}}</tool_call>\n<tool_call>{\"name\":\"ensemble_solver\",\"arguments\":{}}</tool_call>",
        1,
        &["standard_reasoner", "code_reasoner", "search", "ensemble_solver"],
    ),
    case(
        "ok/leading-whitespace",
        "\n\n   <reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        1,
        &["python"],
    ),
    case(
        "ok/trailing-whitespace",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>\n\n  \n",
        1,
        &["python"],
    ),
    case(
        "ok/escaped-latex",
        "<reasoning>simplify</reasoning>\n<tool_call>{\"name\": \"standard_reasoner\", \"arguments\": {\"subtask\": \"Simplify \\\\frac{6}{8} and say \\\"done\\\".\"}}</tool_call>",
        1,
        &["standard_reasoner"],
    ),
    case(
        "ok/unicode",
        "<reasoning>Überprüfung der Lösung: π ≈ 3.14159</reasoning>\n<tool_call>{\"name\":\"critical_reviewer\",\"arguments\":{\"subtask\":\"Prüfe: ∑ 1/n² = π²/6\"}}</tool_call>",
        1,
        &["critical_reviewer"],
    ),
    case(
        "ok/pretty-json",
        "<reasoning>\nsearch\n</reasoning>\n<tool_call>\n{\n  \"name\": \"search\",\n  \"arguments\": {\n    \"query_list\": [\n      \"boiling point of water\"\n    ]\n  }\n}\n</tool_call>",
        1,
        &["search"],
    ),
    case(
        "ok/final-with-other-call",
        "<reasoning>last check and finish</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"print(2)\"}}</tool_call>\n<tool_call>{\"name\":\"final_answer\",\"arguments\":{}}</tool_call>",
        1,
        &["python", "final_answer"],
    ),
    case(
        "ok/unknown-tool",
        "<reasoning>try it</reasoning>\n<tool_call>{\"name\":\"web_browser\",\"arguments\":{\"url\":\"x\"}}</tool_call>",
        1,
        &["web_browser"],
    ),
    case(
        "ok/six-calls",
        "<reasoning>many</reasoning><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"2\"}}</tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"3\"}}</tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"4\"}}</tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"5\"}}</tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"6\"}}</tool_call>",
        1,
        &["python", "python", "python", "python", "python", "python"],
    ),
    case(
        "ok/empty-reasoning",
        "<reasoning></reasoning><tool_call>{\"name\":\"final_answer\",\"arguments\":{}}</tool_call>",
        1,
        &["final_answer"],
    ),
    case(
        "ok/arguments-first",
        "<reasoning>order of keys is free</reasoning><tool_call>{\"arguments\":{\"code\":\"1\"},\"name\":\"python\"}</tool_call>",
        1,
        &["python"],
    ),
    case(
        "ok/reasoning-mentions-tags",
        "<reasoning>Next I emit a tool_call block with valid JSON.</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"print('<x>')\"}}</tool_call>",
        1,
        &["python"],
    ),
    // Structural errors.
    case(
        "bad/no-reasoning",
        "<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &["python"],
    ),
    case("bad/reasoning-only", "<reasoning>I am done thinking.</reasoning>", 0, &[]),
    case("bad/empty", "", 0, &[]),
    case("bad/prose", "The answer is probably 42, no tools needed.", 0, &[]),
    case(
        "bad/text-before-reasoning",
        "Sure, here is my plan.\n<reasoning>x</reasoning>\n<tool_call>{\"name\":\"search\",\"arguments\":{\"query_list\":[\"q\"]}}</tool_call>",
        0,
        &["search"],
    ),
    case(
        "bad/text-between",
        "<reasoning>x</reasoning>\nCalling the tool now:\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &["python"],
    ),
    case(
        "bad/trailing-text",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>\nLet me know if that works.",
        0,
        &["python"],
    ),
    case(
        "bad/unclosed-reasoning",
        "<reasoning>plan\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &["python"],
    ),
    case(
        "bad/unclosed-call",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}",
        0,
        &[],
    ),
    case(
        "bad/second-call-unclosed",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>\n<tool_call>{\"name\":\"search\",\"arguments\":{\"query_list\":[\"q\"]}}",
        0,
        &["python"],
    ),
    case(
        "bad/trailing-comma",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"},}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/one-of-two-invalid",
        "<reasoning>x</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>\n<tool_call>{name: search}</tool_call>",
        0,
        &["python"],
    ),
    case(
        "bad/missing-arguments",
        "<reasoning>x</reasoning><tool_call>{\"name\":\"ensemble_solver\"}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/arguments-list",
        "<reasoning>x</reasoning><tool_call>{\"name\":\"search\",\"arguments\":[\"q\"]}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/arguments-string",
        "<reasoning>x</reasoning><tool_call>{\"name\":\"search\",\"arguments\":\"{\\\"query_list\\\":[\\\"q\\\"]}\"}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/extra-field",
        "<reasoning>x</reasoning><tool_call>{\"id\":1,\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/empty-name",
        "<reasoning>x</reasoning><tool_call>{\"name\":\"  \",\"arguments\":{}}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/name-not-text",
        "<reasoning>x</reasoning><tool_call>{\"name\":7,\"arguments\":{}}</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/body-is-array",
        "<reasoning>x</reasoning><tool_call>[{\"name\":\"python\",\"arguments\":{}}]</tool_call>",
        0,
        &[],
    ),
    case(
        "bad/nested-opener",
        "<reasoning>x</reasoning><tool_call><tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &["python"],
    ),
    case(
        "bad/two-reasoning-blocks",
        "<reasoning>a</reasoning>\n<reasoning>b</reasoning>\n<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>",
        0,
        &["python"],
    ),
    case(
        "bad/call-before-reasoning",
        "<tool_call>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</tool_call>\n<reasoning>afterthought</reasoning>",
        0,
        &["python"],
    ),
    case(
        "bad/uppercase-tags",
        "<REASONING>x</REASONING><TOOL_CALL>{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}</TOOL_CALL>",
        0,
        &[],
    ),
    case(
        "bad/code-fence",
        "<reasoning>x</reasoning><tool_call>```json\n{\"name\":\"python\",\"arguments\":{\"code\":\"1\"}}\n```</tool_call>",
        0,
        &[],
    ),
];
