#include "aml/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "aml/errors.hpp"
#include "aml/util.hpp"

namespace aml {

namespace {

// Howard Hinnant's civil-date algorithms; keeps timestamps independent of the
// host timezone database.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

int parse_fixed_int(const std::string& s, std::size_t& pos, int width, const char* what) {
    int v = 0;
    int digits = 0;
    while (digits < width && pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos] - '0');
        ++pos;
        ++digits;
    }
    if (digits == 0) throw RowError(std::string("timestamp: expected ") + what);
    return v;
}

// One CSV record, RFC-style quoting. Returns false at end of input.
bool next_csv_record(const std::string& text, std::size_t& pos, std::vector<std::string>& fields,
                     std::size_t& line, std::size_t& record_line) {
    fields.clear();
    if (pos >= text.size()) return false;
    record_line = line;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    while (pos < text.size()) {
        char c = text[pos];
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field += '"';
                    ++pos;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
                if (c == '\n') ++line;
            }
            ++pos;
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            ++pos;
            continue;
        }
        if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            ++pos;
            continue;
        }
        if (c == '\n' || c == '\r') {
            if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            ++line;
            fields.push_back(std::move(field));
            return true;
        }
        field += c;
        ++pos;
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    ++line;
    return true;
}

bool parse_bool01(const std::string& s, bool& out) {
    std::string t = trim(s);
    if (t == "0") {
        out = false;
        return true;
    }
    if (t == "1") {
        out = true;
        return true;
    }
    return false;
}

}  // namespace

CsvSchema CsvSchema::from_config(const Config& cfg) {
    CsvSchema s;
    s.timestamp = cfg.get_string("ingest.col.timestamp", s.timestamp);
    s.from_bank = cfg.get_string("ingest.col.from_bank", s.from_bank);
    s.from_account = cfg.get_string("ingest.col.from_account", s.from_account);
    s.to_bank = cfg.get_string("ingest.col.to_bank", s.to_bank);
    s.to_account = cfg.get_string("ingest.col.to_account", s.to_account);
    s.amount_received = cfg.get_string("ingest.col.amount_received", s.amount_received);
    s.receiving_currency = cfg.get_string("ingest.col.receiving_currency", s.receiving_currency);
    s.amount_paid = cfg.get_string("ingest.col.amount_paid", s.amount_paid);
    s.payment_currency = cfg.get_string("ingest.col.payment_currency", s.payment_currency);
    s.payment_format = cfg.get_string("ingest.col.payment_format", s.payment_format);
    s.is_laundering = cfg.get_string("ingest.col.is_laundering", s.is_laundering);
    s.timestamp_format = cfg.get_string("ingest.timestamp_format", s.timestamp_format);
    return s;
}

std::int64_t parse_timestamp(const std::string& text, const std::string& format) {
    std::string t = trim(text);
    std::int64_t year = 1970;
    int month = 1, day = 1, hour = 0, minute = 0, second = 0;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            ++f;
            switch (format[f]) {
                case 'Y': year = parse_fixed_int(t, pos, 4, "year"); break;
                case 'm': month = parse_fixed_int(t, pos, 2, "month"); break;
                case 'd': day = parse_fixed_int(t, pos, 2, "day"); break;
                case 'H': hour = parse_fixed_int(t, pos, 2, "hour"); break;
                case 'M': minute = parse_fixed_int(t, pos, 2, "minute"); break;
                case 'S': second = parse_fixed_int(t, pos, 2, "second"); break;
                default:
                    throw ConfigError(std::string("unsupported timestamp directive %") + format[f]);
            }
            continue;
        }
        if (pos >= t.size() || t[pos] != format[f])
            throw RowError("timestamp '" + t + "' does not match format '" + format + "'");
        ++pos;
    }
    if (pos != t.size())
        throw RowError("timestamp '" + t + "' has trailing characters for format '" + format + "'");
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
        throw RowError("timestamp '" + t + "' has out-of-range fields");
    return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 +
           hour * 3600 + minute * 60 + second;
}

std::string format_timestamp(std::int64_t epoch_seconds, const std::string& format) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t year;
    unsigned month, day;
    civil_from_days(days, year, month, day);
    const int hour = static_cast<int>(rem / 3600);
    const int minute = static_cast<int>((rem % 3600) / 60);
    const int second = static_cast<int>(rem % 60);

    std::ostringstream os;
    char buf[8];
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            ++f;
            int v = 0;
            int width = 2;
            switch (format[f]) {
                case 'Y': v = static_cast<int>(year); width = 4; break;
                case 'm': v = static_cast<int>(month); break;
                case 'd': v = static_cast<int>(day); break;
                case 'H': v = hour; break;
                case 'M': v = minute; break;
                case 'S': v = second; break;
                default:
                    throw ConfigError(std::string("unsupported timestamp directive %") + format[f]);
            }
            std::snprintf(buf, sizeof(buf), "%0*d", width, v);
            os << buf;
            continue;
        }
        os << format[f];
    }
    return os.str();
}

std::uint32_t discretize_time(std::int64_t timestamp, std::int64_t origin) {
    if (timestamp < origin)
        throw DataError("timestamp " + std::to_string(timestamp) + " precedes origin " +
                        std::to_string(origin));
    return static_cast<std::uint32_t>((timestamp - origin) / 3600);
}

std::int64_t parse_amount_cents(const std::string& text) {
    std::string t = trim(text);
    if (t.empty()) throw RowError("empty amount");
    std::size_t pos = 0;
    std::int64_t whole = 0;
    bool any_digit = false;
    while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) {
        whole = whole * 10 + (t[pos] - '0');
        if (whole > (std::int64_t{1} << 56)) throw RowError("amount too large: " + t);
        ++pos;
        any_digit = true;
    }
    std::int64_t cents = whole * 100;
    if (pos < t.size() && t[pos] == '.') {
        ++pos;
        int frac_digits = 0;
        int frac = 0;
        while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) {
            if (frac_digits >= 2) throw RowError("amount has more than two decimals: " + t);
            frac = frac * 10 + (t[pos] - '0');
            ++frac_digits;
            ++pos;
            any_digit = true;
        }
        if (frac_digits == 1) frac *= 10;
        cents += frac;
    }
    if (!any_digit || pos != t.size()) throw RowError("unparsable amount: " + t);
    return cents;
}

ParseResult parse_csv_text(const std::string& text, const CsvSchema& schema,
                           const ParseOptions& opts) {
    std::size_t pos = 0;
    std::size_t line = 1;
    std::size_t record_line = 0;
    std::vector<std::string> fields;

    if (!next_csv_record(text, pos, fields, line, record_line))
        throw SchemaError("empty file: no header row");

    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < fields.size(); ++i) col[trim(fields[i])] = i;

    auto col_of = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw SchemaError("missing column '" + name + "' in header");
        return it->second;
    };
    const std::size_t c_ts = col_of(schema.timestamp);
    const std::size_t c_fb = col_of(schema.from_bank);
    const std::size_t c_fa = col_of(schema.from_account);
    const std::size_t c_tb = col_of(schema.to_bank);
    const std::size_t c_ta = col_of(schema.to_account);
    const std::size_t c_ar = col_of(schema.amount_received);
    const std::size_t c_rc = col_of(schema.receiving_currency);
    const std::size_t c_ap = col_of(schema.amount_paid);
    const std::size_t c_pc = col_of(schema.payment_currency);
    const std::size_t c_pf = col_of(schema.payment_format);
    const std::size_t c_il = col_of(schema.is_laundering);
    const std::size_t need = fields.size();

    ParseResult out;
    while (next_csv_record(text, pos, fields, line, record_line)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        try {
            if (fields.size() != need)
                throw RowError("expected " + std::to_string(need) + " fields, got " +
                               std::to_string(fields.size()));
            RawRow row;
            row.line = record_line;
            row.timestamp = parse_timestamp(fields[c_ts], schema.timestamp_format);
            row.src_bank = trim(fields[c_fb]);
            row.src_account = trim(fields[c_fa]);
            row.dst_bank = trim(fields[c_tb]);
            row.dst_account = trim(fields[c_ta]);
            row.amount_received_cents = parse_amount_cents(fields[c_ar]);
            row.receiving_currency = trim(fields[c_rc]);
            row.amount_paid_cents = parse_amount_cents(fields[c_ap]);
            row.payment_currency = trim(fields[c_pc]);
            row.payment_format = trim(fields[c_pf]);
            if (!parse_bool01(fields[c_il], row.is_laundering))
                throw RowError("laundering flag must be 0 or 1, got '" + fields[c_il] + "'");
            out.rows.push_back(std::move(row));
        } catch (const RowError& e) {
            std::string msg = "line " + std::to_string(record_line) + ": " + e.what();
            if (!opts.lenient) throw RowError(msg);
            ++out.skipped;
            if (out.skip_messages.size() < 16) out.skip_messages.push_back(msg);
        }
    }
    return out;
}

ParseResult parse_csv(const std::filesystem::path& path, const CsvSchema& schema,
                      const ParseOptions& opts) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open CSV file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_csv_text(ss.str(), schema, opts);
}

Intermediate build_intermediate(const std::vector<RawRow>& rows, const BuildOptions& opts) {
    if (rows.empty()) throw DataError("no transactions: intermediate representation is undefined");

    Intermediate out;
    std::int64_t origin = rows[0].timestamp;
    for (const RawRow& r : rows) origin = std::min(origin, r.timestamp);
    out.origin = origin;

    std::map<std::pair<std::string, std::string>, std::uint32_t> account_ids;
    std::map<std::string, std::uint16_t> currency_ids;
    std::map<std::string, std::uint16_t> format_ids;

    auto account_of = [&](const std::string& bank, const std::string& acct) {
        auto key = std::make_pair(bank, acct);
        auto it = account_ids.find(key);
        if (it != account_ids.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(out.accounts.size());
        account_ids.emplace(std::move(key), id);
        AccountRecord rec;
        rec.bank = bank;
        rec.account = acct;
        rec.first_step = UINT32_MAX;
        rec.last_step = 0;
        out.accounts.push_back(std::move(rec));
        return id;
    };
    auto intern = [](std::map<std::string, std::uint16_t>& ids, std::vector<std::string>& names,
                     const std::string& s) {
        auto it = ids.find(s);
        if (it != ids.end()) return it->second;
        const auto id = static_cast<std::uint16_t>(names.size());
        ids.emplace(s, id);
        names.push_back(s);
        return id;
    };

    std::uint32_t max_step = 0;
    for (const RawRow& r : rows) {
        const bool self = r.src_bank == r.dst_bank && r.src_account == r.dst_account;
        if (self && opts.drop_self_transactions) {
            ++out.dropped_self_transactions;
            continue;
        }
        TransactionRecord tx;
        tx.src_account = account_of(r.src_bank, r.src_account);
        tx.dst_account = account_of(r.dst_bank, r.dst_account);
        tx.amount_paid_cents = r.amount_paid_cents;
        tx.amount_received_cents = r.amount_received_cents;
        tx.payment_currency = intern(currency_ids, out.currencies, r.payment_currency);
        tx.receiving_currency = intern(currency_ids, out.currencies, r.receiving_currency);
        tx.payment_format = intern(format_ids, out.formats, r.payment_format);
        tx.time_step = discretize_time(r.timestamp, origin);
        tx.is_laundering = r.is_laundering;
        max_step = std::max(max_step, tx.time_step);

        for (std::uint32_t a : {tx.src_account, tx.dst_account}) {
            AccountRecord& rec = out.accounts[a];
            if (tx.is_laundering) rec.label = Label::launderer;
            rec.first_step = std::min(rec.first_step, tx.time_step);
            rec.last_step = std::max(rec.last_step, tx.time_step);
        }
        out.transactions.push_back(tx);
    }
    if (out.transactions.empty())
        throw DataError("all rows dropped: intermediate representation is undefined");
    out.total_steps = max_step + 1;

    // Canonical account order: sorted by (bank, account); indices remapped.
    std::vector<std::uint32_t> order(out.accounts.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const AccountRecord& ra = out.accounts[a];
        const AccountRecord& rb = out.accounts[b];
        return std::tie(ra.bank, ra.account) < std::tie(rb.bank, rb.account);
    });
    std::vector<std::uint32_t> rank(order.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
    std::vector<AccountRecord> sorted;
    sorted.reserve(out.accounts.size());
    for (std::uint32_t i : order) sorted.push_back(std::move(out.accounts[i]));
    out.accounts = std::move(sorted);
    for (TransactionRecord& tx : out.transactions) {
        tx.src_account = rank[tx.src_account];
        tx.dst_account = rank[tx.dst_account];
    }
    for (AccountRecord& rec : out.accounts)
        if (rec.first_step == UINT32_MAX) rec.first_step = 0;
    return out;
}

}  // namespace aml
