package bank;

import java.util.ArrayList;
import java.util.List;

public class Bank {
    private List<Account> accounts = new ArrayList<>();
    private long fees;

    public Account open(String owner, long amount) {
        Account acct = new Account(owner, amount);
        accounts.add(acct);
        return acct;
    }

    public boolean transfer(Account from, Account to, long amount) {
        long fee = computeFee(amount);
        if (!from.withdraw(amount + fee)) {
            return false;
        }
        to.deposit(amount);
        fees += fee;
        return true;
    }

    private long computeFee(long amount) {
        long fee = amount / 100;
        if (fee < 1) {
            fee = 1;
        }
        return fee;
    }

    public long totalDeposits() {
        long total = 0;
        for (Account a : accounts) {
            total += a.getBalance();
        }
        return total + fees;
    }

    @Override
    public String toString() {
        return "Bank(" + accounts.size() + ")";
    }
}
