#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aml/config.hpp"

namespace aml {

// Maps the logical transaction fields onto CSV column names. Defaults follow
// the IT-AML export header; remap via config keys ingest.col.<field>.
struct CsvSchema {
    std::string timestamp = "Timestamp";
    std::string from_bank = "From Bank";
    std::string from_account = "Account";
    std::string to_bank = "To Bank";
    std::string to_account = "Account.1";
    std::string amount_received = "Amount Received";
    std::string receiving_currency = "Receiving Currency";
    std::string amount_paid = "Amount Paid";
    std::string payment_currency = "Payment Currency";
    std::string payment_format = "Payment Format";
    std::string is_laundering = "Is Laundering";
    // strftime-like subset: %Y %m %d %H %M %S plus literals.
    std::string timestamp_format = "%Y/%m/%d %H:%M";

    static CsvSchema from_config(const Config& cfg);
};

struct RawRow {
    std::int64_t timestamp = 0;  // seconds since epoch, timezone-free civil time
    std::string src_bank, src_account;
    std::string dst_bank, dst_account;
    std::int64_t amount_paid_cents = 0;
    std::int64_t amount_received_cents = 0;
    std::string payment_currency, receiving_currency, payment_format;
    bool is_laundering = false;
    std::size_t line = 0;  // 1-based line in the source file
};

struct ParseOptions {
    bool lenient = false;  // skip bad rows and count them instead of failing
};

struct ParseResult {
    std::vector<RawRow> rows;
    std::size_t skipped = 0;
    std::vector<std::string> skip_messages;  // first few, for diagnostics
};

ParseResult parse_csv(const std::filesystem::path& path, const CsvSchema& schema,
                      const ParseOptions& opts = {});
ParseResult parse_csv_text(const std::string& text, const CsvSchema& schema,
                           const ParseOptions& opts = {});

// Timezone-free civil-time conversions for the configurable timestamp format.
std::int64_t parse_timestamp(const std::string& text, const std::string& format);
std::string format_timestamp(std::int64_t epoch_seconds, const std::string& format);

// Hour bucket index. Throws DataError when timestamp < origin.
std::uint32_t discretize_time(std::int64_t timestamp, std::int64_t origin);

// Amount string ("123.45", at most two decimals, non-negative) to cents.
std::int64_t parse_amount_cents(const std::string& text);

enum class Label : std::uint8_t { lawful = 0, launderer = 1 };

struct TransactionRecord {
    std::uint32_t src_account = 0;  // index into Intermediate::accounts
    std::uint32_t dst_account = 0;
    std::int64_t amount_paid_cents = 0;
    std::int64_t amount_received_cents = 0;
    std::uint16_t payment_currency = 0;   // code into Intermediate::currencies
    std::uint16_t receiving_currency = 0;
    std::uint16_t payment_format = 0;     // code into Intermediate::formats
    std::uint32_t time_step = 0;
    bool is_laundering = false;
};

struct AccountRecord {
    std::string bank;
    std::string account;
    Label label = Label::lawful;
    std::uint32_t first_step = 0;
    std::uint32_t last_step = 0;
};

// The intermediate representation: a transaction list plus a labeled account
// list, with hourly time steps anchored at the corpus minimum timestamp.
struct Intermediate {
    std::vector<TransactionRecord> transactions;  // input order
    std::vector<AccountRecord> accounts;          // sorted by (bank, account)
    std::vector<std::string> currencies;          // code -> name
    std::vector<std::string> formats;
    std::uint32_t total_steps = 0;
    std::int64_t origin = 0;
    std::size_t dropped_self_transactions = 0;
};

struct BuildOptions {
    bool drop_self_transactions = false;
};

Intermediate build_intermediate(const std::vector<RawRow>& rows, const BuildOptions& opts = {});

}  // namespace aml
