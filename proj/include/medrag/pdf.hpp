#pragma once

#include <string>

#include "medrag/ingest.hpp"

namespace medrag {

/// Text-layer extractor for simple PDFs: walks the page tree, inflates
/// FlateDecode content streams (object streams included) and collects the
/// strings shown by Tj, TJ, ' and ". Single-byte font encodings are mapped
/// as Latin-1; CID fonts and scanned pages yield little or no text.
PdfExtractor basic_pdf_extractor();

/// Runs an external converter. `command` is a shell command in which the
/// token {input} is replaced by the path of a temporary copy of the PDF; its
/// stdout is split into pages on form feeds (pdftotext convention), e.g.
/// "pdftotext -enc UTF-8 {input} -".
PdfExtractor command_pdf_extractor(std::string command);

}  // namespace medrag
