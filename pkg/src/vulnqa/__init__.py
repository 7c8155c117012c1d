"""CVE question answering over NVD JSON feeds.

Pipeline: parse feeds into normalized CVE records, index them with TF-IDF,
retrieve context for a question, assemble a grounded prompt, and send it to
a pluggable completion backend. An evaluation harness generates question
batches from the corpus, judges answers, and reports accuracy, failure
modes, and token efficiency.
"""

__version__ = "0.1.0"
