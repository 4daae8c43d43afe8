"""Builders for replay fixtures and stub-search corpora used across the
test suite.

Each scenario builder returns (task_text, fixture_entries); entries follow
the replay schema: {stage, ordinal, reply: {content, tool_call?}, usage}.
Tool sources live here as constants so oracle tests can exercise the same
code the fixtures generate.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

# ---------------------------------------------------------------------------
# tool sources the fixtures "write"
# ---------------------------------------------------------------------------

EXTRACT_EMAILS_SOURCE = '''"""Extract email addresses from text."""
import re
from typing import Annotated


def extract_emails(
    text: Annotated[str, "The text to scan for email addresses."],
) -> Annotated[list[str], "Email addresses in order of appearance."]:
    """Extract every email address found in the given text."""
    pattern = r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\\.[A-Za-z]{2,}"
    return re.findall(pattern, text)


example = "Reach support@example.com or sales@example.org today."
print(extract_emails(example))
'''

REVERSE_STRING_SOURCE = '''"""Reverse a string."""
from typing import Annotated


def reverse_string(
    text: Annotated[str, "The string to reverse."],
) -> Annotated[str, "The reversed string."]:
    """Return the input string reversed."""
    return text[::-1]


print(reverse_string("support@example.com"))
'''

UPPERCASE_SOURCE = '''"""Convert a string to uppercase."""
from typing import Annotated


def convert_to_uppercase(
    text: Annotated[str, "The string to convert."],
) -> Annotated[str, "The uppercase string."]:
    """Return the input string converted to uppercase."""
    return text.upper()


print(convert_to_uppercase("moc.elpmaxe@troppus"))
'''

WEB_SEARCH_SOURCE = '''"""Search the web and return the organic results."""
import json
import os
import urllib.parse
import urllib.request
from typing import Annotated


def web_search(
    query: Annotated[str, "The search query string."],
) -> Annotated[str, "Formatted organic results, one 'title: snippet' line each."]:
    """Search the web for a query and return the formatted organic results."""
    api_key = "<<API_KEY:serpapi>>"
    endpoint = os.environ.get("SEARCH_API_ENDPOINT", "https://serpapi.com")
    params = urllib.parse.urlencode({"q": query, "api_key": api_key})
    with urllib.request.urlopen(f"{endpoint}/search?{params}") as response:
        payload = json.loads(response.read().decode("utf-8"))
    lines = []
    for item in payload.get("organic_results", []):
        lines.append(f"{item.get('title', '')}: {item.get('snippet', '')}")
    return "\\n".join(lines)


results = web_search("current president of the United States")
print(results)
'''

WORD_FREQUENCY_SOURCE = '''"""Count word frequencies in a sentence."""
import re
from collections import Counter
from typing import Annotated


def word_frequency_counter(
    sentence: Annotated[str, "The sentence to analyze."],
    n: Annotated[int, "How many of the most common words to return."] = 5,
) -> Annotated[dict, "Word-to-count mapping for the n most common words."]:
    """Count how often each word appears in a sentence and return the n most common."""
    words = re.findall(r"[a-z0-9']+", sentence.lower())
    return dict(Counter(words).most_common(n))


print(word_frequency_counter("the quick brown fox jumps over the lazy dog the fox"))
'''

SORT_NUMBERS_SOURCE = '''"""Sort a list of numbers."""
from typing import Annotated


def sort_numbers(
    numbers: Annotated[list[float], "The numbers to sort."],
    descending: Annotated[bool, "Sort largest first when true."] = False,
) -> Annotated[list[float], "The numbers in sorted order."]:
    """Sort a list of numbers in ascending or descending order."""
    return sorted(numbers, reverse=descending)


print(sort_numbers([3.0, 1.0, 2.0]))
'''

FACTORIAL_BROKEN_SOURCE = '''"""Compute the factorial of a number."""
from typing import Annotated


def compute_factorial(
    number: Annotated[int, "The non-negative integer."],
) -> Annotated[int, "The factorial of the input."]:
    """Compute the factorial of a non-negative integer."""
    result = 1
    for i in range(2, number + 1):
        result = result * i
    return resul


print(compute_factorial(6))
'''

FACTORIAL_FIXED_SOURCE = FACTORIAL_BROKEN_SOURCE.replace("return resul\n", "return result\n")

ALWAYS_BROKEN_SOURCE = '''"""Render a fractal region."""
print(render_target)
'''

TASK02_TEXT = (
    "Please contact support@example.com or sales@example.org for assistance."
)
TASK02 = (
    "Extract all email addresses from the following text, reverse each one, "
    f"and convert them to uppercase: {TASK02_TEXT}"
)
TASK03 = "Who is the current president of the United States?"
WORDFREQ_SENTENCE = "the quick brown fox jumps over the lazy dog the fox"
SORTING_NUMBERS = [42, 7, 19, 3, 88, 23]
SORTING_TASK = "Sort these numbers in ascending order: 42, 7, 19, 3, 88, 23"

# ---------------------------------------------------------------------------
# entry helpers
# ---------------------------------------------------------------------------


def entry(
    stage: str,
    ordinal: int,
    content: str,
    tool_call: dict[str, Any] | None = None,
    prompt_tokens: int = 500,
    completion_tokens: int = 100,
) -> dict[str, Any]:
    reply: dict[str, Any] = {"content": content}
    if tool_call is not None:
        reply["tool_call"] = tool_call
    return {
        "stage": stage,
        "ordinal": ordinal,
        "reply": reply,
        "usage": {
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
        },
    }


def analyzer(ordinal: int, subtasks: list[str], **usage) -> dict[str, Any]:
    text = "\n".join(f"{i}. {item}" for i, item in enumerate(subtasks, 1))
    return entry("task_analyzer", ordinal, text, **usage)


def master(ordinal: int, tools: list[dict[str, str]], **usage) -> dict[str, Any]:
    return entry(
        "tool_master", ordinal, f"```json\n{json.dumps(tools, indent=2)}\n```", **usage
    )


def master_no_tool(ordinal: int, **usage) -> dict[str, Any]:
    body = json.dumps([{"name": "No tool required", "description": ""}])
    return entry("tool_master", ordinal, f"```json\n{body}\n```", **usage)


def selector(ordinal: int, verdicts: list[dict[str, Any]], **usage) -> dict[str, Any]:
    return entry(
        "tool_selector",
        ordinal,
        f"```json\n{json.dumps(verdicts, indent=2)}\n```",
        **usage,
    )


def writer(ordinal: int, source: str, preamble: str = "Here is the tool.", **usage) -> dict[str, Any]:
    return entry(
        "code_writer",
        ordinal,
        f"{preamble}\n```python\n{source}```\nTERMINATE",
        prompt_tokens=usage.pop("prompt_tokens", 900),
        completion_tokens=usage.pop("completion_tokens", 400),
        **usage,
    )


def writer_sentinel(ordinal: int, api_name: str, **usage) -> dict[str, Any]:
    return entry(
        "code_writer",
        ordinal,
        f"This tool needs access to an external search API.\n\n"
        f"API_KEY_REQUIRED = {api_name}",
        **usage,
    )


def solver_call(ordinal: int, name: str, arguments: dict[str, Any], **usage) -> dict[str, Any]:
    return entry(
        "task_solver",
        ordinal,
        "",
        tool_call={"name": name, "arguments": arguments},
        prompt_tokens=usage.pop("prompt_tokens", 850),
        completion_tokens=usage.pop("completion_tokens", 40),
        **usage,
    )


def solver_final(ordinal: int, text: str, **usage) -> dict[str, Any]:
    return entry(
        "task_solver",
        ordinal,
        f"{text}\nTERMINATE",
        prompt_tokens=usage.pop("prompt_tokens", 900),
        completion_tokens=usage.pop("completion_tokens", 120),
        **usage,
    )


def write_fixture(path: str | Path, entries: list[dict[str, Any]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    return target


# ---------------------------------------------------------------------------
# scenario fixtures
# ---------------------------------------------------------------------------


def task02_fixture() -> tuple[str, list[dict[str, Any]]]:
    """Email extraction pipeline: three tools generated, then composed."""
    tools = [
        {
            "name": "Email_Extractor_Tool",
            "description": "Extracts all email addresses from a block of text",
        },
        {
            "name": "String_Reverser_Tool",
            "description": "Reverses the characters of a string",
        },
        {
            "name": "Uppercase_Converter_Tool",
            "description": "Converts a string to uppercase letters",
        },
    ]
    entries = [
        analyzer(
            0,
            [
                "Extract all email addresses from the provided text",
                "Reverse each extracted email address",
                "Convert each reversed address to uppercase and present the results",
            ],
        ),
        master(0, tools),
        selector(
            0,
            [
                {**tool, "is_available": False}
                for tool in tools
            ],
        ),
        writer(0, EXTRACT_EMAILS_SOURCE),
        writer(1, REVERSE_STRING_SOURCE),
        writer(2, UPPERCASE_SOURCE),
        solver_call(0, "extract_emails", {"text": TASK02_TEXT}),
        solver_call(1, "reverse_string", {"text": "support@example.com"}),
        solver_call(2, "convert_to_uppercase", {"text": "moc.elpmaxe@troppus"}),
        solver_call(3, "reverse_string", {"text": "sales@example.org"}),
        solver_call(4, "convert_to_uppercase", {"text": "gro.elpmaxe@selas"}),
        solver_final(
            5,
            "The reversed, uppercased email addresses are:\n"
            "1. MOC.ELPMAXE@TROPPUS\n"
            "2. GRO.ELPMAXE@SELAS",
        ),
    ]
    return TASK02, entries


def task03_fixture() -> tuple[str, list[dict[str, Any]]]:
    """Web-search tool built via the API-key branch, then used to answer."""
    tool = {
        "name": "Web_Search_Tool",
        "description": "Searches the web for a query and returns the organic results",
    }
    entries = [
        analyzer(
            0,
            [
                "Search the web for the current president of the United States",
                "Read the top results and report the name",
            ],
        ),
        master(0, [tool]),
        selector(0, [{**tool, "is_available": False}]),
        writer_sentinel(0, "serpapi"),
        writer(1, WEB_SEARCH_SOURCE),
        solver_call(
            0, "web_search", {"query": "current president of the United States"}
        ),
        solver_final(
            1,
            "According to the search results, the current president of the "
            "United States is Jordan Rivera.",
        ),
    ]
    return TASK03, entries


def build_stub_search_dir(root: str | Path) -> Path:
    """Fixture corpus for the local search stub used by the Task 03 flow."""
    root = Path(root)
    (root / "pages").mkdir(parents=True, exist_ok=True)
    (root / "queries.json").write_text(
        json.dumps(
            {
                "queries": {
                    "serpapi api documentation": "docs.json",
                    "current president of the United States": "president.json",
                }
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    (root / "docs.json").write_text(
        json.dumps(
            {
                "organic_results": [
                    {
                        "title": "Search API Documentation",
                        "link": "{BASE}/pages/serpapi.html",
                        "snippet": (
                            "Query the search endpoint with q and api_key "
                            "parameters; the JSON response contains organic_results."
                        ),
                    }
                ]
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    (root / "pages" / "serpapi.html").write_text(
        "<html><head><title>Search API</title>"
        "<style>body{color:red}</style></head>"
        "<body><h1>Search API reference</h1>"
        "<p>Send GET requests to /search with parameters q and api_key.</p>"
        "<p>The response is JSON with an organic_results array; each entry "
        "has title, link and snippet fields.</p>"
        "<script>console.log('ignored')</script></body></html>",
        encoding="utf-8",
    )
    (root / "president.json").write_text(
        json.dumps(
            {
                "organic_results": [
                    {
                        "title": "President of the United States - Example Encyclopedia",
                        "link": "https://encyclopedia.example/potus",
                        "snippet": (
                            "Jordan Rivera is the current president of the "
                            "United States, having taken office in January."
                        ),
                    },
                    {
                        "title": "Administration | Example Gov",
                        "link": "https://gov.example/administration",
                        "snippet": "President Jordan Rivera leads the administration.",
                    },
                ]
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return root


WORDFREQ_TOOL = {
    "name": "Word_Frequency_Counter",
    "description": (
        "Counts how often each word appears in a sentence and returns the "
        "most common words"
    ),
}


def wordfreq_origin_fixture() -> tuple[str, list[dict[str, Any]]]:
    task = (
        "Count the word frequencies in this sentence and list the 5 most "
        f"common words: '{WORDFREQ_SENTENCE}'"
    )
    entries = [
        analyzer(0, ["Count how often each word occurs", "Report the 5 most common words"]),
        master(0, [WORDFREQ_TOOL]),
        selector(0, [{**WORDFREQ_TOOL, "is_available": False}]),
        writer(0, WORD_FREQUENCY_SOURCE),
        solver_call(
            0, "word_frequency_counter", {"sentence": WORDFREQ_SENTENCE, "n": 5}
        ),
        solver_final(
            1,
            "The five most common words are: the (3), fox (2), quick (1), "
            "brown (1), jumps (1).",
        ),
    ]
    return task, entries


def wordfreq_alt_fixtures() -> list[tuple[str, list[dict[str, Any]]]]:
    """Same capability requested under three different phrasings; the
    selector rebinds each to the stored Word_Frequency_Counter."""
    phrasings = [
        (
            f"What are the most frequent words in the sentence '{WORDFREQ_SENTENCE}'?",
            {"name": "Word Counter Tool", "description": "Counts word occurrences in text"},
        ),
        (
            f"Find the top 3 recurring words in: '{WORDFREQ_SENTENCE}'",
            {
                "name": "Frequency Analyzer",
                "description": "Analyzes text and reports the most repeated words",
            },
        ),
        (
            f"Give me a count of every word's occurrences in '{WORDFREQ_SENTENCE}'",
            {
                "name": "Word Occurrence Tool",
                "description": "Produces per-word occurrence counts for a sentence",
            },
        ),
    ]
    fixtures = []
    for task, requested in phrasings:
        entries = [
            analyzer(0, ["Count the words in the sentence", "Report the most common ones"]),
            master(0, [requested]),
            selector(
                0,
                [
                    {
                        "name": WORDFREQ_TOOL["name"],
                        "description": WORDFREQ_TOOL["description"],
                        "is_available": True,
                    }
                ],
            ),
            solver_call(
                0, "word_frequency_counter", {"sentence": WORDFREQ_SENTENCE, "n": 5}
            ),
            solver_final(1, "The most common words are: the (3), fox (2)."),
        ]
        fixtures.append((task, entries))
    return fixtures


FACTORIAL_TOOL = {
    "name": "Factorial_Tool",
    "description": "Computes the factorial of a non-negative integer",
}


def repair_fixture() -> tuple[str, list[dict[str, Any]]]:
    """First draft raises NameError, second draft fixes it."""
    task = "What is the factorial of 6?"
    entries = [
        analyzer(0, ["Compute the factorial of 6", "Report the result"]),
        master(0, [FACTORIAL_TOOL]),
        selector(0, [{**FACTORIAL_TOOL, "is_available": False}]),
        writer(0, FACTORIAL_BROKEN_SOURCE),
        writer(1, FACTORIAL_FIXED_SOURCE, preamble="Apologies, fixed the typo."),
        solver_call(0, "compute_factorial", {"number": 6}),
        solver_final(1, "The factorial of 6 is 720."),
    ]
    return task, entries


def never_succeeds_fixture(max_iterations: int = 5) -> tuple[str, list[dict[str, Any]]]:
    task = "Render the fractal regions of the Verhulst map as described"
    tool = {
        "name": "Fractal_Renderer_Tool",
        "description": "Renders fractal regions of iterated maps",
    }
    entries = [
        analyzer(0, ["Render the requested fractal regions"]),
        master(0, [tool]),
        selector(0, [{**tool, "is_available": False}]),
    ]
    for ordinal in range(max_iterations):
        entries.append(
            writer(ordinal, ALWAYS_BROKEN_SOURCE, preamble=f"Attempt {ordinal + 1}.")
        )
    return task, entries


def reject_fixture() -> tuple[str, list[dict[str, Any]]]:
    """One clean draft; the scenario's human rejects it before execution."""
    task = "What is the factorial of 6?"
    entries = [
        analyzer(0, ["Compute the factorial of 6", "Report the result"]),
        master(0, [FACTORIAL_TOOL]),
        selector(0, [{**FACTORIAL_TOOL, "is_available": False}]),
        writer(0, FACTORIAL_FIXED_SOURCE),
    ]
    return task, entries


SORTING_TOOL = {
    "name": "Number_Sorting_Tool",
    "description": "Sorts a list of numbers into ascending or descending order",
}


def sorting_miss_fixture() -> tuple[str, list[dict[str, Any]]]:
    """Tool absent: full generation path."""
    entries = [
        analyzer(0, ["Sort the given numbers ascending", "Present the sorted list"]),
        master(0, [SORTING_TOOL]),
        selector(0, [{**SORTING_TOOL, "is_available": False}]),
        writer(0, SORT_NUMBERS_SOURCE),
        solver_call(0, "sort_numbers", {"numbers": SORTING_NUMBERS}),
        solver_final(1, "Sorted ascending: 3, 7, 19, 23, 42, 88."),
    ]
    return SORTING_TASK, entries


def sorting_hit_fixture() -> tuple[str, list[dict[str, Any]]]:
    """Tool already registered: selector rebinds, no generation."""
    entries = [
        analyzer(0, ["Sort the given numbers ascending", "Present the sorted list"]),
        master(0, [SORTING_TOOL]),
        selector(0, [{**SORTING_TOOL, "is_available": True}]),
        solver_call(0, "sort_numbers", {"numbers": SORTING_NUMBERS}),
        solver_final(1, "Sorted ascending: 3, 7, 19, 23, 42, 88."),
    ]
    return SORTING_TASK, entries


def no_tool_fixture() -> tuple[str, list[dict[str, Any]]]:
    task = "Summarize in one sentence: 'The quick brown fox jumps over the lazy dog.'"
    entries = [
        analyzer(0, ["Summarize the given sentence in one sentence"]),
        master_no_tool(0),
        solver_final(
            0, "A nimble fox leaps over an idle dog.", prompt_tokens=420
        ),
    ]
    return task, entries
